//! Data generation for each protocol and the windowed views used by training and
//! analysis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::spec::{EnsembleProtocol, ExperimentSpec, OrbitProtocol, Protocol, SweepProtocol};
use crate::datasets::{
    make_split, normalize_parameter, observe, split_counts, zscore, DatasetMeta, DelayDataset, ObservationOperator,
    ObservedSeries, Split, SplitCounts,
};
use crate::dynamics::{ci_reconstruct_field, integrate_system, SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::io;
use crate::tensor::Mat;

pub const OBSERVED_DIR: &str = "observed";
pub const TEST_ORBIT_DIR: &str = "test_orbit";
pub const STATES_FILE: &str = "states.csv";

/// Series id of the held-out test orbit in the state table.
pub const TEST_ORBIT_ID: usize = 1_000_000_000;

/// In-memory result of data generation.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub observed: DelayDataset,
    pub test_orbit: Option<DelayDataset>,
    /// Full simulated state of every series, keyed by series id.
    pub states: BTreeMap<usize, Mat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_series: usize,
    pub n_samples: usize,
    pub splits: SplitCounts,
    pub state_dim: usize,
    pub obs_dim: usize,
}

impl ExperimentData {
    pub fn summary(&self) -> DataSummary {
        let assign: Vec<Option<Split>> = self.observed.series.iter().map(|s| s.split).collect();
        DataSummary {
            n_series: self.observed.series.len(),
            n_samples: self.observed.series.iter().map(|s| s.times.len()).sum(),
            splits: split_counts(&assign),
            state_dim: self.states.values().next().map_or(0, Mat::cols),
            obs_dim: self.observed.meta.obs_dim,
        }
    }

    /// State of series `id` at sample `row`.
    pub fn state(&self, id: usize, row: usize) -> Result<&[f64]> {
        let m = self
            .states
            .get(&id)
            .ok_or_else(|| Error::MissingArtifact(format!("state history of series {id}")))?;
        if row >= m.rows() {
            return Err(Error::invalid(format!("sample {row} beyond series {id}")));
        }
        Ok(m.row(row))
    }

    /// Files are written below `dir`; returns paths relative to `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        let mut files = Vec::new();
        self.observed.save(&dir.join(OBSERVED_DIR))?;
        files.extend(dataset_files(&self.observed, OBSERVED_DIR));
        if let Some(t) = &self.test_orbit {
            t.save(&dir.join(TEST_ORBIT_DIR))?;
            files.extend(dataset_files(t, TEST_ORBIT_DIR));
        }
        let d = self.states.values().next().map_or(0, Mat::cols);
        let mut header = vec!["id".to_string(), "row".to_string()];
        header.extend((0..d).map(|j| format!("s{j}")));
        let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.states.iter().flat_map(|(&id, m)| {
            (0..m.rows()).map(move |r| {
                let mut v = vec![id as f64, r as f64];
                v.extend_from_slice(m.row(r));
                v
            })
        });
        io::write_csv(&dir.join(STATES_FILE), &hdr, rows)?;
        files.push(STATES_FILE.to_string());
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let observed = DelayDataset::load(&dir.join(OBSERVED_DIR))?;
        let test_dir = dir.join(TEST_ORBIT_DIR);
        let test_orbit = if test_dir.join("manifest.json").exists() {
            Some(DelayDataset::load(&test_dir)?)
        } else {
            None
        };
        let (header, rows) = io::read_csv(&dir.join(STATES_FILE))?;
        let d = header.len().saturating_sub(2);
        let mut states: BTreeMap<usize, Mat> = BTreeMap::new();
        for r in rows {
            if r.len() != d + 2 {
                return Err(Error::DimensionMismatch {
                    expected: d + 2,
                    got: r.len(),
                });
            }
            states
                .entry(r[0] as usize)
                .or_insert_with(|| Mat::zeros(0, d))
                .push_row(&r[2..]);
        }
        Ok(ExperimentData {
            observed,
            test_orbit,
            states,
        })
    }
}

fn dataset_files(ds: &DelayDataset, sub: &str) -> Vec<String> {
    let mut v: Vec<String> = ds
        .series
        .iter()
        .map(|s| format!("{sub}/series_{:05}.csv", s.id))
        .collect();
    v.push(format!("{sub}/manifest.json"));
    v
}

/// Simulate and observe according to `spec`.
pub fn generate(spec: &ExperimentSpec) -> Result<ExperimentData> {
    let l = spec.variants.iter().map(|v| v.model.context_len).max().unwrap_or(1);
    match &spec.protocol {
        Protocol::Orbit(p) => generate_orbit(&spec.system, p, l),
        Protocol::Ensemble(p) => generate_ensemble(&spec.system, p, l),
        Protocol::Sweep(p) => generate_sweep(&spec.system, p, l),
    }
}

fn meta(l: usize, dt: f64, h: &ObservationOperator, obs_dim: usize) -> DatasetMeta {
    DatasetMeta {
        l,
        dt,
        observation: h.clone(),
        obs_dim,
        cond_range: None,
        zscored: false,
        intrinsic_dim: None,
    }
}

fn generate_orbit(system: &SystemSpec, p: &OrbitProtocol, l: usize) -> Result<ExperimentData> {
    let sys = system.build()?;
    let tr = integrate_system(&sys, system, &p.x0, (0.0, p.t_end), p.dt, p.rtol, p.atol)?;
    let values = observe(&tr, &p.observation)?;
    let obs_dim = values.cols();
    let series = ObservedSeries {
        id: 0,
        times: tr.times.clone(),
        values,
        split: None,
        cond: None,
    };
    Ok(ExperimentData {
        observed: DelayDataset::from_series(meta(l, p.dt, &p.observation, obs_dim), vec![series])?,
        test_orbit: None,
        states: BTreeMap::from([(0, tr.states)]),
    })
}

fn ensemble_trajectory(
    sys: &crate::dynamics::System,
    system: &SystemSpec,
    p: &EnsembleProtocol,
    x0: &[f64],
    t_end: f64,
) -> Result<Trajectory> {
    let mut start = x0.to_vec();
    if p.transient > 0.0 {
        let warm = integrate_system(sys, system, x0, (0.0, p.transient), p.transient, p.rtol, p.atol)?;
        start = warm.states.row(warm.len() - 1).to_vec();
    }
    integrate_system(sys, system, &start, (0.0, t_end), p.dt, p.rtol, p.atol)
}

fn observe_ensemble(system: &SystemSpec, p: &EnsembleProtocol, tr: &Trajectory) -> Result<Mat> {
    if p.observe_field {
        let SystemSpec::ChafeeInfante(ci) = system else {
            return Err(Error::invalid(
                "field observation requires the reaction-diffusion system",
            ));
        };
        let grid = ci.grid();
        let field = tr.map_states(grid.len(), |phi| ci_reconstruct_field(phi, &grid))?;
        observe(&field, &p.observation)
    } else {
        observe(tr, &p.observation)
    }
}

fn generate_ensemble(system: &SystemSpec, p: &EnsembleProtocol, l: usize) -> Result<ExperimentData> {
    let d = system.dim();
    if p.ic_low.len() != d || p.ic_high.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.ic_low.len().min(p.ic_high.len()),
        });
    }
    if p.ic_low.iter().zip(&p.ic_high).any(|(a, b)| !(b > a)) {
        return Err(Error::invalid("initial-condition box requires high > low"));
    }
    let sys = system.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.data_seed);
    let assign = make_split(p.n_trajectories, p.ratios, p.split_seed)?;
    let mut series = Vec::new();
    let mut states = BTreeMap::new();
    let mut obs_dim = 0;
    for (i, a) in assign.iter().enumerate() {
        let x0: Vec<f64> = p
            .ic_low
            .iter()
            .zip(&p.ic_high)
            .map(|(&lo, &hi)| rng.gen_range(lo..hi))
            .collect();
        if a.is_none() {
            continue;
        }
        let tr = ensemble_trajectory(&sys, system, p, &x0, p.t_end)?;
        let values = observe_ensemble(system, p, &tr)?;
        obs_dim = values.cols();
        series.push(ObservedSeries {
            id: i,
            times: tr.times.clone(),
            values,
            split: *a,
            cond: None,
        });
        states.insert(i, tr.states);
    }
    let observed = DelayDataset::from_series(meta(l, p.dt, &p.observation, obs_dim), series)?;
    let test_orbit = match &p.test_orbit {
        Some(t) => {
            let tr = integrate_system(&sys, system, &t.x0, (0.0, t.t_end), p.dt, p.rtol, p.atol)?;
            let values = observe_ensemble(system, p, &tr)?;
            states.insert(TEST_ORBIT_ID, tr.states.clone());
            let s = ObservedSeries {
                id: TEST_ORBIT_ID,
                times: tr.times,
                values,
                split: Some(Split::Test),
                cond: None,
            };
            Some(DelayDataset::from_series(
                meta(l, p.dt, &p.observation, obs_dim),
                vec![s],
            )?)
        }
        None => None,
    };
    Ok(ExperimentData {
        observed,
        test_orbit,
        states,
    })
}

/// Trajectories start on the limit cycle at a random phase; the real part is observed.
fn generate_sweep(system: &SystemSpec, p: &SweepProtocol, l: usize) -> Result<ExperimentData> {
    let SystemSpec::StuartLandau(base) = system else {
        return Err(Error::invalid("parameter sweep requires the Stuart-Landau system"));
    };
    if p.mus.is_empty() || p.per_mu == 0 {
        return Err(Error::invalid("parameter sweep needs at least one trajectory"));
    }
    let h = ObservationOperator::Component(0);
    let mut rng = ChaCha8Rng::seed_from_u64(p.data_seed);
    let mut series = Vec::new();
    let mut states = BTreeMap::new();
    for (k, &mu) in p.mus.iter().enumerate() {
        let cond = normalize_parameter(mu, p.mu_range)?;
        let spec = SystemSpec::StuartLandau(crate::dynamics::StuartLandauParams { mu, ..*base });
        let sys = spec.build()?;
        let assign = make_split(p.per_mu, p.ratios, p.split_seed.wrapping_add(k as u64))?;
        for a in assign {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let id = series.len();
            let Some(a) = a else { continue };
            let x0 = [mu.sqrt() * theta.cos(), mu.sqrt() * theta.sin()];
            let tr = integrate_system(&sys, &spec, &x0, (0.0, p.t_end), p.dt, p.rtol, p.atol)?;
            let mut values = observe(&tr, &h)?;
            if p.zscore {
                values = zscore(&values).0;
            }
            series.push(ObservedSeries {
                id,
                times: tr.times.clone(),
                values,
                split: Some(a),
                cond: Some(cond),
            });
            states.insert(id, tr.states);
        }
    }
    let mut m = meta(l, p.dt, &h, 1);
    m.cond_range = Some(p.mu_range);
    m.zscored = p.zscore;
    Ok(ExperimentData {
        observed: DelayDataset::from_series(m, series)?,
        test_orbit: None,
        states,
    })
}

/// Re-window `ds` with context length `l`, optionally dropping the conditioning channel.
pub fn rewindow(ds: &DelayDataset, l: usize, keep_cond: bool) -> Result<DelayDataset> {
    let mut meta = ds.meta.clone();
    meta.l = l;
    let mut series = ds.series.clone();
    if !keep_cond {
        meta.cond_range = None;
        for s in &mut series {
            s.cond = None;
        }
    }
    DelayDataset::from_series(meta, series)
}

/// Chronological split of a single orbit into a leading training segment and a
/// trailing validation segment; the validation series overlaps the training one by
/// `l` samples so that every window of the orbit is used exactly once.
pub fn chronological(ds: &DelayDataset, l: usize, train_fraction: f64) -> Result<DelayDataset> {
    let s = ds
        .series
        .first()
        .ok_or_else(|| Error::invalid("orbit dataset is empty"))?;
    let t = s.times.len();
    if t < l + 3 {
        return Err(Error::invalid("orbit too short for the context length"));
    }
    let n = t - l;
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let part = |lo: usize, hi: usize, split: Split, id: usize| ObservedSeries {
        id,
        times: s.times[lo..hi].to_vec(),
        values: s.values.slice_rows(lo, hi),
        split: Some(split),
        cond: s.cond,
    };
    let mut meta = ds.meta.clone();
    meta.l = l;
    DelayDataset::from_series(
        meta,
        vec![part(0, n_train + l, Split::Train, 0), part(n_train, t, Split::Val, 1)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::spec::ExperimentTag;

    #[test]
    fn chronological_split_uses_every_window_once() {
        let spec = ExperimentSpec::default_for(ExperimentTag::SdofCase1);
        let data = generate(&spec).unwrap();
        let full = rewindow(&data.observed, 2, true).unwrap();
        let ds = chronological(&data.observed, 2, 0.8).unwrap();
        assert_eq!(ds.len(), full.len());
        let tr = ds.indices(Split::Train).len();
        assert_eq!(tr, (0.8 * full.len() as f64).round() as usize);
        for i in 0..ds.len() {
            assert_eq!(ds.window(i), full.window(i));
            assert_eq!(ds.target(i), full.target(i));
        }
    }

    #[test]
    fn sweep_is_stratified_and_conditioned() {
        let mut spec = ExperimentSpec::default_for(ExperimentTag::SurrogateAware);
        if let Protocol::Sweep(p) = &mut spec.protocol {
            p.t_end = 5.0;
        }
        let data = generate(&spec).unwrap();
        let s = data.summary();
        assert_eq!((s.splits.train, s.splits.val, s.splits.test), (112, 24, 24));
        for ser in &data.observed.series {
            let c = ser.cond.unwrap();
            assert!((0.0..=1.0).contains(&c));
            let mean = ser.values.col(0).iter().sum::<f64>() / ser.values.rows() as f64;
            assert!(mean.abs() < 1e-12);
            let st = &data.states[&ser.id];
            let mu = 0.2 + 1.4 * c;
            let r = (st[(0, 0)].powi(2) + st[(0, 1)].powi(2)).sqrt();
            assert!((r - mu.sqrt()).abs() < 1e-9);
        }
        let stripped = rewindow(&data.observed, 7, false).unwrap();
        assert_eq!(stripped.token_dim(), 1);
        assert_eq!(data.observed.token_dim(), 2);
    }

    #[test]
    fn save_and_load_round_trip() {
        let mut spec = ExperimentSpec::default_for(ExperimentTag::VdpPartial);
        if let Protocol::Ensemble(p) = &mut spec.protocol {
            p.n_trajectories = 18;
            p.test_orbit.as_mut().unwrap().t_end = 3.0;
        }
        let data = generate(&spec).unwrap();
        assert_eq!(data.observed.series.len(), 18);
        let dir = tempfile::tempdir().unwrap();
        let files = data.save(dir.path()).unwrap();
        assert!(files.iter().all(|f| dir.path().join(f).exists()));
        let back = ExperimentData::load(dir.path()).unwrap();
        assert_eq!(back.observed, data.observed);
        assert_eq!(back.test_orbit, data.test_orbit);
        assert_eq!(back.states, data.states);
        assert_eq!(back.state(TEST_ORBIT_ID, 0).unwrap(), &[2.0, 0.0]);
    }
}
