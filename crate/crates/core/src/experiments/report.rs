//! Aggregation of per-seed analyses into distributions and acceptance verdicts.

use serde::{Deserialize, Serialize};

use super::evaluate::SeedAnalysis;
use super::spec::{ExperimentSpec, ExperimentTag, Protocol};
use crate::dynamics::{modal_frequencies_2dof, sdof_natural_frequency, SystemSpec};
use crate::lintheory::{convex_ar_feasibility, sdof_ar2_closed_form, FeasibilityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Some(Distribution {
            n,
            min: s[0],
            median,
            max: s[n - 1],
            values: values.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub val_mse: Option<Distribution>,
    pub test_mse: Option<Distribution>,
    pub seeds: Vec<SeedAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Reference quantities of the simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Reference {
    #[serde(default)]
    pub natural_frequency_hz: Option<f64>,
    #[serde(default)]
    pub closed_form_ar: Option<Vec<f64>>,
    #[serde(default)]
    pub closed_form_feasibility: Option<FeasibilityReport>,
    #[serde(default)]
    pub modal_frequencies_hz: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tag: ExperimentTag,
    pub spec_fingerprint: String,
    pub seeds: Vec<u64>,
    pub reference: Reference,
    pub variants: Vec<VariantSummary>,
    pub verdicts: Vec<Verdict>,
    /// Analysis files this report was built from, relative to the run directory.
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

pub fn reference(spec: &ExperimentSpec) -> Reference {
    let mut r = Reference::default();
    match (&spec.system, &spec.protocol) {
        (SystemSpec::Sdof(p), Protocol::Orbit(o)) => {
            r.natural_frequency_hz = Some(sdof_natural_frequency(p));
            if let Ok(ar) = sdof_ar2_closed_form(p, o.dt) {
                r.closed_form_feasibility = Some(convex_ar_feasibility(&ar.coeffs));
                r.closed_form_ar = Some(ar.coeffs);
            }
        }
        (SystemSpec::TwoDof(p), _) => {
            r.modal_frequencies_hz = modal_frequencies_2dof(p).ok().map(|m| m.frequencies_hz.to_vec());
        }
        _ => {}
    }
    r
}

/// Seeds needed for a fraction-of-seeds criterion.
pub fn required(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn count_verdict(name: &str, what: &str, passes: &[bool], fraction: f64) -> Verdict {
    let k = passes.iter().filter(|&&p| p).count();
    let need = required(fraction, passes.len());
    Verdict {
        name: name.into(),
        passed: !passes.is_empty() && k >= need,
        detail: format!("{what}: {k}/{} seeds (need {need})", passes.len()),
    }
}

fn missing(name: &str, variant: &str) -> Verdict {
    Verdict {
        name: name.into(),
        passed: false,
        detail: format!("variant {variant:?} was not run"),
    }
}

fn targets_present(a: &SeedAnalysis) -> Vec<bool> {
    a.spectrum
        .as_ref()
        .map(|s| s.targets.iter().map(|t| t.present).collect())
        .unwrap_or_default()
}

fn median_test_mse(v: &VariantSummary) -> Option<f64> {
    v.test_mse.as_ref().map(|d| d.median)
}

pub fn summarize(name: &str, mut seeds: Vec<SeedAnalysis>) -> VariantSummary {
    seeds.sort_by_key(|a| a.seed);
    let val: Vec<f64> = seeds.iter().filter_map(|a| a.val_mse).collect();
    let test: Vec<f64> = seeds.iter().filter_map(|a| a.test_mse).collect();
    VariantSummary {
        name: name.into(),
        val_mse: Distribution::of(&val),
        test_mse: Distribution::of(&test),
        seeds,
    }
}

/// Verdicts of an experiment tag from its variant summaries.
pub fn verdicts(spec: &ExperimentSpec, reference: &Reference, variants: &[VariantSummary]) -> Vec<Verdict> {
    let acc = &spec.acceptance;
    let frac = acc.min_pass_fraction;
    let find = |n: &str| variants.iter().find(|v| v.name == n);
    let mut out = Vec::new();
    match spec.tag {
        ExperimentTag::SdofCase1 => {
            let target = reference.natural_frequency_hz.unwrap_or(f64::NAN);
            let v = &variants[0];
            let passes: Vec<bool> = v
                .seeds
                .iter()
                .map(|a| {
                    a.spectrum
                        .as_ref()
                        .and_then(|s| s.dominant_hz)
                        .is_some_and(|f| (f - target).abs() <= acc.peak_tol_hz)
                })
                .collect();
            out.push(count_verdict(
                "dominant-peak-at-natural-frequency",
                &format!("dominant rollout peak within {} Hz of {target:.3} Hz", acc.peak_tol_hz),
                &passes,
                frac,
            ));
        }
        ExperimentTag::SdofCase2 => {
            let feas = reference.closed_form_feasibility.as_ref();
            out.push(Verdict {
                name: "closed-form-infeasible".into(),
                passed: feas.is_some_and(|f| !f.feasible),
                detail: format!(
                    "closed-form coefficients {:?}: {}",
                    reference.closed_form_ar.clone().unwrap_or_default(),
                    feas.map_or("unavailable".to_string(), |f| f.reason.clone())
                ),
            });
            let v = &variants[0];
            let passes: Vec<bool> = v
                .seeds
                .iter()
                .map(|a| !targets_present(a).first().copied().unwrap_or(false))
                .collect();
            out.push(count_verdict(
                "no-resonance-peak",
                &format!(
                    "no peak of prominence >= {} within {} Hz of {:.3} Hz",
                    acc.min_prominence,
                    acc.peak_tol_hz,
                    reference.natural_frequency_hz.unwrap_or(f64::NAN)
                ),
                &passes,
                frac,
            ));
        }
        ExperimentTag::TwodofCase1 | ExperimentTag::TwodofCase3 => {
            for v in variants {
                let passes: Vec<bool> = v
                    .seeds
                    .iter()
                    .map(|a| {
                        let t = targets_present(a);
                        !t.is_empty() && t.iter().all(|&p| p)
                    })
                    .collect();
                out.push(count_verdict(
                    &format!("{}-both-modes-present", v.name),
                    "both modal peaks in the rollout spectrum",
                    &passes,
                    frac,
                ));
            }
        }
        ExperimentTag::TwodofCase2 => {
            for v in variants {
                let passes: Vec<bool> = v
                    .seeds
                    .iter()
                    .map(|a| targets_present(a).iter().any(|&p| !p) || a.spectrum.is_none())
                    .collect();
                out.push(count_verdict(
                    &format!("{}-a-mode-absent", v.name),
                    "at least one modal peak missing from the rollout spectrum",
                    &passes,
                    frac,
                ));
            }
        }
        ExperimentTag::VdpFull => match (find("transformer-pe"), find("mlp")) {
            (Some(t), Some(m)) => {
                let (mt, mm) = (median_test_mse(t), median_test_mse(m));
                match (mt, mm) {
                    (Some(a), Some(b)) => {
                        out.push(Verdict {
                            name: "both-accurate".into(),
                            passed: a <= acc.max_test_mse && b <= acc.max_test_mse,
                            detail: format!(
                                "median test MSE transformer {a:.3e}, mlp {b:.3e} (limit {:.0e})",
                                acc.max_test_mse
                            ),
                        });
                        let ratio = a.max(b) / a.min(b);
                        out.push(Verdict {
                            name: "comparable-accuracy".into(),
                            passed: ratio <= acc.mse_ratio,
                            detail: format!("median ratio {ratio:.2} (limit {})", acc.mse_ratio),
                        });
                    }
                    _ => out.push(missing("both-accurate", "test MSE")),
                }
            }
            (None, _) => out.push(missing("both-accurate", "transformer-pe")),
            (_, None) => out.push(missing("both-accurate", "mlp")),
        },
        ExperimentTag::VdpPartial => {
            match (find("transformer-1d-pe"), find("mlp")) {
                (Some(t), Some(m)) => match (median_test_mse(t), median_test_mse(m)) {
                    (Some(a), Some(b)) => out.push(Verdict {
                        name: "transformer-beats-mlp".into(),
                        passed: b >= acc.mse_ratio * a,
                        detail: format!(
                            "median test MSE transformer {a:.3e}, mlp {b:.3e}; ratio {:.1} (need {})",
                            b / a,
                            acc.mse_ratio
                        ),
                    }),
                    _ => out.push(missing("transformer-beats-mlp", "test MSE")),
                },
                (None, _) => out.push(missing("transformer-beats-mlp", "transformer-1d-pe")),
                (_, None) => out.push(missing("transformer-beats-mlp", "mlp")),
            }
            match find("transformer-1d-pe") {
                Some(t) => {
                    let passes: Vec<bool> = t
                        .seeds
                        .iter()
                        .map(|a| a.phase.as_ref().is_some_and(|p| p.ratio >= acc.phase_ratio))
                        .collect();
                    out.push(count_verdict(
                        "phase-separation",
                        &format!("opposite-branch Z distance >= {} x same-branch spread", acc.phase_ratio),
                        &passes,
                        frac,
                    ));
                }
                None => out.push(missing("phase-separation", "transformer-1d-pe")),
            }
        }
        ExperimentTag::Ci3d | ExperimentTag::Ci2d => {
            let unfolded = |a: &SeedAnalysis| {
                a.dimension
                    .as_ref()
                    .is_some_and(|d| d.dimension == acc.expected_dimension)
                    && a.mode_r2
                        .as_ref()
                        .is_some_and(|r| !r.is_empty() && r.iter().all(|&v| v >= acc.min_r2))
            };
            let v = &variants[0];
            if spec.tag == ExperimentTag::Ci3d {
                let passes: Vec<bool> = v.seeds.iter().map(unfolded).collect();
                out.push(count_verdict(
                    "unfolded-manifold",
                    &format!(
                        "effective dimension {} and R2 >= {} for the two leading modes",
                        acc.expected_dimension, acc.min_r2
                    ),
                    &passes,
                    frac,
                ));
            } else {
                let passes: Vec<bool> = v.seeds.iter().map(|a| !unfolded(a)).collect();
                out.push(count_verdict(
                    "folded-manifold",
                    "fails the dimension or mode-predictability check",
                    &passes,
                    frac,
                ));
            }
        }
        ExperimentTag::SurrogateAware => match (find("aware"), find("unaware")) {
            (Some(a), Some(u)) => {
                let mut passes = Vec::new();
                for sa in &a.seeds {
                    let Some(su) = u.seeds.iter().find(|s| s.seed == sa.seed) else {
                        passes.push(false);
                        continue;
                    };
                    let sep = matches!((&sa.separation, &su.separation), (Some(x), Some(y)) if x.score > y.score);
                    let worst = matches!((sa.worst_cond_mse, su.worst_cond_mse), (Some(x), Some(y)) if x < y);
                    passes.push(sep && worst);
                }
                out.push(count_verdict(
                    "aware-separates-and-is-uniform",
                    "higher cycle separation and lower worst-parameter MSE than the paired unaware run",
                    &passes,
                    frac,
                ));
                out.push(reconstruction_verdict(a, u));
            }
            _ => out.push(missing("aware-separates-and-is-uniform", "aware/unaware")),
        },
        ExperimentTag::SurrogateUnaware => {}
    }
    out
}

fn fold_means(v: &VariantSummary) -> Option<Vec<f64>> {
    let errs: Vec<&Vec<f64>> = v.seeds.iter().filter_map(|s| s.reconstruction_error.as_ref()).collect();
    if errs.is_empty() || errs.len() != v.seeds.len() {
        return None;
    }
    let k = errs[0].len();
    if errs.iter().any(|e| e.len() != k) {
        return None;
    }
    Some(
        (0..k)
            .map(|f| errs.iter().map(|e| e[f]).sum::<f64>() / errs.len() as f64)
            .collect(),
    )
}

/// Seed-averaged held-out error must be lower for the aware model on every fold.
fn reconstruction_verdict(a: &VariantSummary, u: &VariantSummary) -> Verdict {
    match (fold_means(a), fold_means(u)) {
        (Some(ea), Some(eu)) if ea.len() == eu.len() => {
            let better = ea.iter().zip(&eu).filter(|(x, y)| x < y).count();
            Verdict {
                name: "aware-reconstructs-better".into(),
                passed: better == ea.len(),
                detail: format!(
                    "fold errors aware {:?} vs unaware {:?}: aware lower on {better}/{} folds",
                    ea.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
                    eu.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
                    ea.len()
                ),
            }
        }
        _ => missing("aware-reconstructs-better", "reconstruction errors"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distributions_and_required_counts() {
        let d = Distribution::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((d.min, d.median, d.max), (1.0, 2.5, 10.0));
        assert!(Distribution::of(&[]).is_none());
        assert_eq!(required(0.8, 10), 8);
        assert_eq!(required(0.7, 10), 7);
        assert_eq!(required(0.8, 3), 3);
        assert_eq!(required(0.7, 1), 1);
    }

    #[test]
    fn sdof_references() {
        let r2000 = reference(&ExperimentSpec::default_for(ExperimentTag::SdofCase1));
        assert!(r2000.closed_form_feasibility.unwrap().feasible);
        assert!((r2000.natural_frequency_hz.unwrap() - 7.118).abs() < 1e-3);
        let r500 = reference(&ExperimentSpec::default_for(ExperimentTag::SdofCase2));
        assert!(!r500.closed_form_feasibility.unwrap().feasible);
        assert!((r500.natural_frequency_hz.unwrap() - 3.559).abs() < 1e-3);
    }
}
