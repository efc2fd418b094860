use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::datasets::ObservationOperator;
use crate::dynamics::{ChafeeInfanteParams, SdofParams, StuartLandauParams, SystemSpec, TwoDofParams, VdpParams};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{ModelConfig, PosEncoding, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentTag {
    #[serde(rename = "sdof-case1")]
    SdofCase1,
    #[serde(rename = "sdof-case2")]
    SdofCase2,
    #[serde(rename = "twodof-case1")]
    TwodofCase1,
    #[serde(rename = "twodof-case2")]
    TwodofCase2,
    #[serde(rename = "twodof-case3")]
    TwodofCase3,
    #[serde(rename = "vdp-full")]
    VdpFull,
    #[serde(rename = "vdp-partial")]
    VdpPartial,
    #[serde(rename = "ci-2d")]
    Ci2d,
    #[serde(rename = "ci-3d")]
    Ci3d,
    #[serde(rename = "surrogate-aware")]
    SurrogateAware,
    #[serde(rename = "surrogate-unaware")]
    SurrogateUnaware,
}

impl ExperimentTag {
    pub const ALL: [ExperimentTag; 11] = [
        ExperimentTag::SdofCase1,
        ExperimentTag::SdofCase2,
        ExperimentTag::TwodofCase1,
        ExperimentTag::TwodofCase2,
        ExperimentTag::TwodofCase3,
        ExperimentTag::VdpFull,
        ExperimentTag::VdpPartial,
        ExperimentTag::Ci2d,
        ExperimentTag::Ci3d,
        ExperimentTag::SurrogateAware,
        ExperimentTag::SurrogateUnaware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentTag::SdofCase1 => "sdof-case1",
            ExperimentTag::SdofCase2 => "sdof-case2",
            ExperimentTag::TwodofCase1 => "twodof-case1",
            ExperimentTag::TwodofCase2 => "twodof-case2",
            ExperimentTag::TwodofCase3 => "twodof-case3",
            ExperimentTag::VdpFull => "vdp-full",
            ExperimentTag::VdpPartial => "vdp-partial",
            ExperimentTag::Ci2d => "ci-2d",
            ExperimentTag::Ci3d => "ci-3d",
            ExperimentTag::SurrogateAware => "surrogate-aware",
            ExperimentTag::SurrogateUnaware => "surrogate-unaware",
        }
    }

    pub fn family(self) -> Family {
        match self {
            ExperimentTag::SdofCase1 | ExperimentTag::SdofCase2 => Family::Sdof,
            ExperimentTag::TwodofCase1 | ExperimentTag::TwodofCase2 | ExperimentTag::TwodofCase3 => Family::TwoDof,
            ExperimentTag::VdpFull | ExperimentTag::VdpPartial => Family::VanDerPol,
            ExperimentTag::Ci2d | ExperimentTag::Ci3d => Family::ChafeeInfante,
            ExperimentTag::SurrogateAware | ExperimentTag::SurrogateUnaware => Family::Surrogate,
        }
    }
}

impl fmt::Display for ExperimentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment tag {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Sdof,
    TwoDof,
    VanDerPol,
    ChafeeInfante,
    Surrogate,
}

/// One long orbit split chronologically; evaluated by free-run rollout spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitProtocol {
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub observation: ObservationOperator,
    /// Leading fraction of windows used for training; the rest validates.
    pub train_fraction: f64,
    pub rollout_steps: usize,
    /// Observed channel whose rollout spectrum is inspected.
    pub spectrum_channel: usize,
    /// Frequencies (Hz) whose presence in the rollout spectrum is tested.
    pub target_hz: Vec<f64>,
}

/// Many short trajectories from random initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleProtocol {
    pub n_trajectories: usize,
    pub ic_low: Vec<f64>,
    pub ic_high: Vec<f64>,
    /// Integration time discarded before sampling starts.
    pub transient: f64,
    pub t_end: f64,
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Map modal states to the spatial field before observing (grid-node observations).
    #[serde(default)]
    pub observe_field: bool,
    pub observation: ObservationOperator,
    pub ratios: (f64, f64, f64),
    pub data_seed: u64,
    pub split_seed: u64,
    /// Separate long orbit used as the test set, when present.
    #[serde(default)]
    pub test_orbit: Option<TestOrbit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestOrbit {
    pub x0: Vec<f64>,
    pub t_end: f64,
}

/// Limit-cycle trajectories over a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepProtocol {
    pub mus: Vec<f64>,
    pub per_mu: usize,
    pub t_end: f64,
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Normalization range of the conditioning scalar.
    pub mu_range: (f64, f64),
    pub ratios: (f64, f64, f64),
    pub data_seed: u64,
    pub split_seed: u64,
    /// Each observed trajectory is standardized to zero mean and unit variance.
    pub zscore: bool,
    pub reconstruction_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Protocol {
    Orbit(OrbitProtocol),
    Ensemble(EnsembleProtocol),
    Sweep(SweepProtocol),
}

/// A named model and its optimizer settings. Model and shuffle seeds are set per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Variant {
    pub fn seeded(&self, seed: u64) -> (ModelConfig, TrainConfig) {
        let mut m = self.model.clone();
        m.seed = seed;
        let mut t = self.train.clone();
        t.seed = seed.wrapping_add(SHUFFLE_SEED_OFFSET);
        (m, t)
    }
}

const SHUFFLE_SEED_OFFSET: u64 = 1_000_003;

/// Thresholds turning per-seed measurements into verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acceptance {
    /// Seeds that must satisfy a per-seed check.
    pub min_pass_fraction: f64,
    pub peak_tol_hz: f64,
    pub min_prominence: f64,
    pub max_test_mse: f64,
    /// Factor by which one median must beat (or stay within) another.
    pub mse_ratio: f64,
    pub phase_ratio: f64,
    pub phase_x_tol: f64,
    pub phase_central: f64,
    pub dimension_tol: f64,
    pub expected_dimension: usize,
    pub min_r2: f64,
}

impl Default for Acceptance {
    fn default() -> Self {
        Acceptance {
            min_pass_fraction: 0.8,
            peak_tol_hz: 0.5,
            min_prominence: 3.0,
            max_test_mse: 1e-5,
            mse_ratio: 10.0,
            phase_ratio: 10.0,
            phase_x_tol: 1e-2,
            phase_central: 0.5,
            dimension_tol: 0.05,
            expected_dimension: 2,
            min_r2: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub tag: ExperimentTag,
    pub system: SystemSpec,
    pub protocol: Protocol,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub acceptance: Acceptance,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn sdof_train() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        lr_final: Some(1e-4),
        batch_size: 32,
        epochs: 6000,
        patience: 3000,
        ..TrainConfig::default()
    }
}

fn twodof_train() -> TrainConfig {
    TrainConfig {
        lr: 3e-2,
        ..sdof_train()
    }
}

fn vdp_train() -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        lr_final: Some(1e-5),
        batch_size: 64,
        epochs: 60,
        patience: 20,
        ..TrainConfig::default()
    }
}

fn ci_train() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        lr_final: Some(1e-5),
        batch_size: 32,
        epochs: 2000,
        patience: 400,
        ..TrainConfig::default()
    }
}

fn sweep_train() -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        lr_final: Some(1e-5),
        batch_size: 64,
        epochs: 150,
        patience: 40,
        ..TrainConfig::default()
    }
}

fn variant(name: &str, model: ModelConfig, train: TrainConfig) -> Variant {
    Variant {
        name: name.into(),
        model,
        train,
    }
}

fn scalar_attention(l: usize) -> ModelConfig {
    ModelConfig {
        fixed_embedding: true,
        ..ModelConfig::attention_only(1, l, 1, PosEncoding::Learned, 0)
    }
}

/// Scalar observation lifted to a two-dimensional token by a learned embedding.
fn partial_attention(l: usize) -> ModelConfig {
    ModelConfig::attention_only(1, l, 2, PosEncoding::Learned, 0)
}

const VDP_HIDDEN: usize = 32;
const CI_HIDDEN: usize = 64;
const SWEEP_HIDDEN: usize = 32;

impl ExperimentSpec {
    /// The embedded protocol of an experiment tag.
    pub fn default_for(tag: ExperimentTag) -> Self {
        use ExperimentTag::*;
        let seeds: Vec<u64> = (0..10).collect();
        let mut acceptance = Acceptance::default();
        let (system, protocol, variants) = match tag {
            SdofCase1 | SdofCase2 => {
                let k = if tag == SdofCase1 { 2000.0 } else { 500.0 };
                let p = SdofParams { m: 1.0, c: 0.5, k };
                let fn_hz = k.sqrt() / (2.0 * std::f64::consts::PI);
                (
                    SystemSpec::Sdof(p),
                    Protocol::Orbit(OrbitProtocol {
                        x0: vec![0.01, 0.0],
                        t_end: 20.0,
                        dt: 0.04,
                        rtol: 1e-10,
                        atol: 1e-12,
                        observation: ObservationOperator::Component(0),
                        train_fraction: 0.8,
                        rollout_steps: 512,
                        spectrum_channel: 0,
                        target_hz: vec![fn_hz],
                    }),
                    vec![variant("attention", scalar_attention(2), sdof_train())],
                )
            }
            TwodofCase1 | TwodofCase2 | TwodofCase3 => {
                let p = TwoDofParams {
                    m1: 1.0,
                    m2: 1.0,
                    c1: 0.5,
                    c2: 0.5,
                    k1: 1000.0,
                    k2: 1500.0,
                };
                let targets = crate::dynamics::modal_frequencies_2dof(&p)
                    .map(|m| m.frequencies_hz.to_vec())
                    .unwrap_or_default();
                acceptance.min_pass_fraction = 0.7;
                let (observation, variants) = match tag {
                    TwodofCase1 => (
                        ObservationOperator::Select(vec![0, 1]),
                        vec![variant(
                            "l4-full",
                            ModelConfig::attention_only(2, 4, 2, PosEncoding::Learned, 0),
                            twodof_train(),
                        )],
                    ),
                    TwodofCase2 => (
                        ObservationOperator::Component(0),
                        vec![variant("l4", partial_attention(4), twodof_train())],
                    ),
                    _ => (
                        ObservationOperator::Component(0),
                        vec![
                            variant("l8", partial_attention(8), twodof_train()),
                            variant("l9", partial_attention(9), twodof_train()),
                        ],
                    ),
                };
                (
                    SystemSpec::TwoDof(p),
                    Protocol::Orbit(OrbitProtocol {
                        x0: vec![0.01, 0.0, 0.0, 0.0],
                        t_end: 20.0,
                        dt: 0.04,
                        rtol: 1e-10,
                        atol: 1e-12,
                        observation,
                        train_fraction: 0.8,
                        rollout_steps: 512,
                        spectrum_channel: 0,
                        target_hz: targets,
                    }),
                    variants,
                )
            }
            VdpFull | VdpPartial => {
                let hidden = vec![VDP_HIDDEN];
                let (observation, variants) = if tag == VdpFull {
                    (
                        ObservationOperator::Full,
                        vec![
                            variant(
                                "transformer-pe",
                                ModelConfig::transformer_mlp(2, 5, 2, hidden.clone(), PosEncoding::Learned, 0),
                                vdp_train(),
                            ),
                            variant(
                                "transformer-nope",
                                ModelConfig::transformer_mlp(2, 5, 2, hidden.clone(), PosEncoding::None, 0),
                                vdp_train(),
                            ),
                            variant("mlp", ModelConfig::mlp_baseline(2, hidden, 0), vdp_train()),
                        ],
                    )
                } else {
                    (
                        ObservationOperator::Component(0),
                        vec![
                            variant(
                                "transformer-1d-pe",
                                ModelConfig::transformer_mlp(1, 5, 1, hidden.clone(), PosEncoding::Learned, 0),
                                vdp_train(),
                            ),
                            variant(
                                "transformer-2d-pe",
                                ModelConfig::transformer_mlp(1, 5, 2, hidden.clone(), PosEncoding::Learned, 0),
                                vdp_train(),
                            ),
                            variant(
                                "transformer-2d-nope",
                                ModelConfig::transformer_mlp(1, 5, 2, hidden.clone(), PosEncoding::None, 0),
                                vdp_train(),
                            ),
                            variant("mlp", ModelConfig::mlp_baseline(1, hidden, 0), vdp_train()),
                        ],
                    )
                };
                (
                    SystemSpec::VanDerPol(VdpParams { mu: 0.5 }),
                    Protocol::Ensemble(EnsembleProtocol {
                        n_trajectories: 1500,
                        ic_low: vec![-3.0, -3.0],
                        ic_high: vec![3.0, 3.0],
                        transient: 0.0,
                        t_end: 6.5,
                        dt: 0.1,
                        rtol: 1e-6,
                        atol: 1e-9,
                        observe_field: false,
                        observation,
                        ratios: (0.8 / 0.9, 0.1 / 0.9, 0.0),
                        data_seed: 0,
                        split_seed: 0,
                        test_orbit: Some(TestOrbit {
                            x0: vec![2.0, 0.0],
                            t_end: 65.0,
                        }),
                    }),
                    variants,
                )
            }
            Ci2d | Ci3d => {
                acceptance.min_pass_fraction = 0.7;
                let d = if tag == Ci3d { 3 } else { 2 };
                let name = if tag == Ci3d { "latent-3d" } else { "latent-2d" };
                (
                    SystemSpec::ChafeeInfante(ChafeeInfanteParams::default()),
                    Protocol::Ensemble(EnsembleProtocol {
                        n_trajectories: 600,
                        ic_low: vec![-1.5; 3],
                        ic_high: vec![1.5; 3],
                        transient: 3.0,
                        t_end: 4.0,
                        dt: 4.0 / 9.0,
                        rtol: 1e-8,
                        atol: 1e-10,
                        observe_field: true,
                        observation: ObservationOperator::GridNode(10),
                        ratios: (0.7, 0.15, 0.15),
                        data_seed: 0,
                        split_seed: 0,
                        test_orbit: None,
                    }),
                    vec![variant(
                        name,
                        ModelConfig::transformer_mlp(1, 5, d, vec![CI_HIDDEN], PosEncoding::Learned, 0),
                        ci_train(),
                    )],
                )
            }
            SurrogateAware | SurrogateUnaware => {
                let unaware = ModelConfig::transformer_mlp(1, 7, 3, vec![SWEEP_HIDDEN], PosEncoding::Learned, 0);
                let aware = ModelConfig {
                    cond_dim: 1,
                    ..unaware.clone()
                };
                let mut variants = Vec::new();
                if tag == SurrogateAware {
                    variants.push(variant("aware", aware, sweep_train()));
                }
                variants.push(variant("unaware", unaware, sweep_train()));
                (
                    SystemSpec::StuartLandau(StuartLandauParams::surrogate(0.2)),
                    Protocol::Sweep(SweepProtocol {
                        mus: (1..=8).map(|i| 0.2 * i as f64).collect(),
                        per_mu: 20,
                        t_end: 30.0,
                        dt: 0.5,
                        rtol: 1e-9,
                        atol: 1e-11,
                        mu_range: (0.2, 1.6),
                        ratios: (0.7, 0.15, 0.15),
                        data_seed: 0,
                        split_seed: 0,
                        zscore: true,
                        reconstruction_folds: 5,
                    }),
                    variants,
                )
            }
        };
        ExperimentSpec {
            tag,
            system,
            protocol,
            variants,
            seeds,
            acceptance,
            output_dir: None,
        }
    }

    /// Parse a JSON config: `tag` selects the defaults and every other field present
    /// replaces the default (objects merge recursively; arrays are replaced whole).
    pub fn from_json(text: &str) -> Result<Self> {
        let user: serde_json::Value = serde_json::from_str(text)?;
        let tag: ExperimentTag = match user.get("tag") {
            Some(t) => serde_json::from_value(t.clone())?,
            None => return Err(Error::invalid("experiment config requires a \"tag\" field")),
        };
        let mut base = serde_json::to_value(Self::default_for(tag))?;
        merge(&mut base, &user);
        let spec: ExperimentSpec = serde_json::from_value(base)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("seed list is empty"));
        }
        if self.variants.is_empty() {
            return Err(Error::invalid("no model variants"));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("variant names must be unique"));
        }
        for v in &self.variants {
            if v.name.is_empty()
                || !v
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::invalid(format!(
                    "variant name {:?} is not a plain identifier",
                    v.name
                )));
            }
            v.model.validate()?;
            v.train.validate()?;
        }
        let family = self.tag.family();
        let ok = matches!(
            (&self.protocol, family),
            (Protocol::Orbit(_), Family::Sdof | Family::TwoDof)
                | (Protocol::Ensemble(_), Family::VanDerPol | Family::ChafeeInfante)
                | (Protocol::Sweep(_), Family::Surrogate)
        );
        if !ok {
            return Err(Error::invalid(format!(
                "protocol kind does not fit experiment {}",
                self.tag
            )));
        }
        let sys_ok = matches!(
            (&self.system, family),
            (SystemSpec::Sdof(_), Family::Sdof)
                | (SystemSpec::TwoDof(_), Family::TwoDof)
                | (SystemSpec::VanDerPol(_), Family::VanDerPol)
                | (SystemSpec::ChafeeInfante(_), Family::ChafeeInfante)
                | (SystemSpec::StuartLandau(_), Family::Surrogate)
        );
        if !sys_ok {
            return Err(Error::invalid(format!("system does not fit experiment {}", self.tag)));
        }
        Ok(())
    }

    /// Hash of everything except the seed list and output directory.
    pub fn fingerprint(&self) -> String {
        let mut s = self.clone();
        s.seeds.clear();
        s.output_dir = None;
        io::sha256_bytes(&serde_json::to_vec(&s).expect("spec serializes"))
    }

    /// Hash of the inputs of data generation.
    pub fn data_fingerprint(&self) -> String {
        io::sha256_bytes(&serde_json::to_vec(&(&self.system, &self.protocol)).expect("spec serializes"))
    }

    pub fn variant(&self, name: &str) -> Option<&Variant> {
        self.variants.iter().find(|v| v.name == name)
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Parse a seed list: `a..b` (inclusive) or comma-separated values.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let bad = || Error::invalid(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tag_has_valid_defaults() {
        for tag in ExperimentTag::ALL {
            let s = ExperimentSpec::default_for(tag);
            s.validate().unwrap();
            assert_eq!(s.seeds, (0..10).collect::<Vec<_>>());
            assert_eq!(tag.as_str().parse::<ExperimentTag>().unwrap(), tag);
            let json = serde_json::to_string(&s).unwrap();
            let back = ExperimentSpec::from_json(&json).unwrap();
            assert_eq!(back.fingerprint(), s.fingerprint());
        }
    }

    #[test]
    fn context_lengths_and_latent_dims_follow_the_protocols() {
        let l = |t: ExperimentTag| -> Vec<(usize, usize)> {
            ExperimentSpec::default_for(t)
                .variants
                .iter()
                .map(|v| (v.model.context_len, v.model.d_model))
                .collect()
        };
        assert_eq!(l(ExperimentTag::SdofCase1), [(2, 1)]);
        assert_eq!(l(ExperimentTag::TwodofCase1), [(4, 2)]);
        assert_eq!(l(ExperimentTag::TwodofCase2), [(4, 2)]);
        assert_eq!(l(ExperimentTag::TwodofCase3), [(8, 2), (9, 2)]);
        assert_eq!(l(ExperimentTag::VdpFull), [(5, 2), (5, 2), (1, 2)]);
        assert_eq!(l(ExperimentTag::Ci3d), [(5, 3)]);
        assert_eq!(l(ExperimentTag::Ci2d), [(5, 2)]);
        assert_eq!(l(ExperimentTag::SurrogateAware), [(7, 3), (7, 3)]);
        let full = ExperimentSpec::default_for(ExperimentTag::VdpFull);
        let pe: Vec<PosEncoding> = full.variants.iter().map(|v| v.model.pos_encoding).collect();
        assert!(pe.contains(&PosEncoding::Learned) && pe.contains(&PosEncoding::None));
    }

    #[test]
    fn overrides_merge_into_defaults() {
        let s = ExperimentSpec::from_json(
            r#"{"tag": "sdof-case2", "seeds": [3, 4], "protocol": {"kind": "orbit", "rollout_steps": 256}}"#,
        )
        .unwrap();
        assert_eq!(s.seeds, [3, 4]);
        match &s.protocol {
            Protocol::Orbit(p) => {
                assert_eq!(p.rollout_steps, 256);
                assert_eq!(p.dt, 0.04);
            }
            _ => panic!("orbit protocol expected"),
        }
        assert!(ExperimentSpec::from_json(r#"{"seeds": [1]}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"tag": "sdof-case1", "bogus": 1}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"tag": "sdof-case1", "seeds": []}"#).is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..9").unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("2,5, 7").unwrap(), [2, 5, 7]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
