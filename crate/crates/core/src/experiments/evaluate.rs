//! Per-run measurements: rollout spectra, effective AR operators, test errors and
//! latent-space readouts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::data::{chronological, rewindow, ExperimentData, TEST_ORBIT_ID};
use super::spec::{Acceptance, ExperimentSpec, OrbitProtocol, Protocol, SweepProtocol, Variant};
use crate::analysis::{
    attention_summary, closure_check, cycle_separation, effective_dimension, extract_effective_ar, latent_series,
    mode_predictability, phase_separation, AttentionSummary, ClosureReport, CycleSeparation, KernelRidge,
    PhaseSeparation, RIDGE_GRID,
};
use crate::datasets::{DelayDataset, Split};
use crate::error::{Error, Result};
use crate::lintheory::{convex_ar_feasibility, dominant_peaks, periodogram, FeasibilityReport, Peak, SpectralDensity};
use crate::model::{evaluate_mse, forward, rollout, Architecture, Head, ModelConfig, ModelParams};
use crate::tensor::Mat;

/// Largest training fold of the reconstruction regression.
const RECONSTRUCTION_MAX_TRAIN: usize = 600;
/// Peaks reported per spectrum.
const MAX_PEAKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPeak {
    pub target_hz: f64,
    /// Strongest local maximum within the tolerance, if any.
    pub nearest: Option<Peak>,
    /// A peak of sufficient prominence lies within the tolerance.
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub bin_width_hz: f64,
    pub rollout_len: usize,
    pub diverged: bool,
    pub peaks: Vec<Peak>,
    pub dominant_hz: Option<f64>,
    pub targets: Vec<TargetPeak>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArSummary {
    pub alphas: Vec<f64>,
    /// Lag 1 first; scalar models only.
    pub coeffs: Option<Vec<f64>>,
    pub pe_constant: Vec<f64>,
    pub residual: f64,
    pub betas_share_sign: bool,
    pub feasibility: Option<FeasibilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub dimension: usize,
    pub ratios: Vec<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondError {
    pub mu: f64,
    pub mse: f64,
    pub n_windows: usize,
}

/// Everything measured for one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SeedAnalysis {
    pub variant: String,
    pub seed: u64,
    /// Absent when training diverged.
    #[serde(default)]
    pub val_mse: Option<f64>,
    #[serde(default)]
    pub test_mse: Option<f64>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSummary>,
    #[serde(default)]
    pub effective_ar: Option<ArSummary>,
    #[serde(default)]
    pub attention: Option<AttentionSummary>,
    #[serde(default)]
    pub phase: Option<PhaseSeparation>,
    #[serde(default)]
    pub closure: Option<ClosureReport>,
    #[serde(default)]
    pub dimension: Option<DimensionSummary>,
    /// Held-out R² of the leading modal coefficients.
    #[serde(default)]
    pub mode_r2: Option<Vec<f64>>,
    #[serde(default)]
    pub cond_mse: Option<Vec<CondError>>,
    #[serde(default)]
    pub worst_cond_mse: Option<f64>,
    #[serde(default)]
    pub separation: Option<CycleSeparation>,
    /// Relative held-out reconstruction error per fold.
    #[serde(default)]
    pub reconstruction_error: Option<Vec<f64>>,
    /// Failures of individual readouts (the run itself succeeded).
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Tables written next to the analysis JSON.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub tables: BTreeMap<String, (Vec<String>, Vec<Vec<f64>>)>,
}

impl Tables {
    fn add(&mut self, name: &str, header: Vec<String>, rows: Vec<Vec<f64>>) {
        self.tables.insert(name.to_string(), (header, rows));
    }
}

/// The dataset a variant trains on.
pub fn training_set(spec: &ExperimentSpec, variant: &Variant, data: &ExperimentData) -> Result<DelayDataset> {
    let cfg = &variant.model;
    let l = window_len(cfg);
    match &spec.protocol {
        Protocol::Orbit(p) => chronological(&data.observed, l, p.train_fraction),
        Protocol::Ensemble(_) | Protocol::Sweep(_) => rewindow(&data.observed, l, cfg.cond_dim > 0),
    }
}

/// Windows carry the transformer context; the MLP baseline reads the last token of
/// the same windows.
fn window_len(cfg: &ModelConfig) -> usize {
    cfg.context_len
}

pub fn analyze(
    spec: &ExperimentSpec,
    variant: &Variant,
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &ExperimentData,
    seed: u64,
) -> Result<(SeedAnalysis, Tables)> {
    let ds = training_set(spec, variant, data)?;
    let mut out = SeedAnalysis {
        variant: variant.name.clone(),
        seed,
        val_mse: Some(evaluate_mse(params, cfg, &ds.window_set(Some(Split::Val)))?),
        ..SeedAnalysis::default()
    };
    let mut tables = Tables::default();
    match &spec.protocol {
        Protocol::Orbit(p) => analyze_orbit(p, &spec.acceptance, cfg, params, data, &mut out, &mut tables)?,
        Protocol::Ensemble(p) => {
            if p.test_orbit.is_some() {
                analyze_test_orbit(&spec.acceptance, cfg, params, data, &mut out, &mut tables)?;
            } else {
                analyze_manifold(&spec.acceptance, cfg, params, data, &ds, &mut out, &mut tables)?;
            }
        }
        Protocol::Sweep(p) => analyze_sweep(p, cfg, params, data, &ds, &mut out, &mut tables)?,
    }
    Ok((out, tables))
}

/// Peak table of a rollout channel against the target frequencies.
pub fn spectrum_summary(
    series: &[f64],
    dt: f64,
    diverged: bool,
    targets: &[f64],
    acc: &Acceptance,
) -> Result<(SpectrumSummary, SpectralDensity)> {
    let s = periodogram(series, dt)?;
    let peaks = dominant_peaks(&s, usize::MAX, 0.0);
    let targets = targets
        .iter()
        .map(|&f| {
            let near: Vec<&Peak> = peaks.iter().filter(|p| (p.freq - f).abs() <= acc.peak_tol_hz).collect();
            TargetPeak {
                target_hz: f,
                nearest: near.first().map(|p| **p),
                present: near.iter().any(|p| p.prominence >= acc.min_prominence),
            }
        })
        .collect();
    Ok((
        SpectrumSummary {
            bin_width_hz: s.bin_width(),
            rollout_len: series.len(),
            diverged,
            dominant_hz: peaks.first().map(|p| p.freq),
            peaks: peaks.into_iter().take(MAX_PEAKS).collect(),
            targets,
        },
        s,
    ))
}

fn analyze_orbit(
    p: &OrbitProtocol,
    acc: &Acceptance,
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &ExperimentData,
    out: &mut SeedAnalysis,
    tables: &mut Tables,
) -> Result<()> {
    let series = &data.observed.series[0].values;
    let td = cfg.token_dim();
    let l = cfg.context_len;
    let seed_window = &series.data()[..l * td];
    let ro = rollout(params, cfg, seed_window, p.rollout_steps)?;
    let ch = ro.channel(p.spectrum_channel);
    let dt = data.observed.meta.dt;
    let names: Vec<String> = (0..cfg.input_dim).map(|c| format!("y{c}")).collect();
    let mut header = vec!["step".to_string()];
    header.extend(names);
    tables.add(
        "rollout",
        header,
        (0..ro.predictions.rows())
            .map(|i| {
                let mut r = vec![i as f64];
                r.extend_from_slice(ro.predictions.row(i));
                r
            })
            .collect(),
    );
    if ch.len() >= 16 {
        let (summary, s) = spectrum_summary(&ch, dt, ro.diverged, &p.target_hz, acc)?;
        tables.add(
            "spectrum",
            vec!["freq_hz".into(), "power".into()],
            s.freqs.iter().zip(&s.power).map(|(&f, &w)| vec![f, w]).collect(),
        );
        out.spectrum = Some(summary);
    } else {
        out.notes
            .push(format!("rollout diverged after {} steps; no spectrum", ch.len()));
    }
    if cfg.arch == Architecture::Transformer && cfg.head == Head::Linear {
        let trace = forward(params, cfg, seed_window)?;
        match extract_effective_ar(&trace, seed_window, params, cfg) {
            Ok(ear) => {
                let coeffs = ear.ar_coeffs().ok();
                out.effective_ar = Some(ArSummary {
                    feasibility: coeffs.as_deref().map(convex_ar_feasibility),
                    alphas: ear.alphas.clone(),
                    coeffs,
                    pe_constant: ear.pe_constant.clone(),
                    residual: ear.residual,
                    betas_share_sign: ear.betas_share_sign_of_m(),
                });
            }
            Err(e) => out.notes.push(format!("effective AR: {e}")),
        }
    }
    Ok(())
}

fn test_orbit_series(data: &ExperimentData, l: usize) -> Result<DelayDataset> {
    let t = data
        .test_orbit
        .as_ref()
        .ok_or_else(|| Error::MissingArtifact("test orbit".into()))?;
    rewindow(t, l, false)
}

/// Samples per cycle from upward zero crossings of `x`.
fn period_in_samples(x: &[f64]) -> Option<usize> {
    let ups: Vec<usize> = (1..x.len()).filter(|&i| x[i - 1] < 0.0 && x[i] >= 0.0).collect();
    if ups.len() < 2 {
        return None;
    }
    let span = (ups[ups.len() - 1] - ups[0]) as f64 / (ups.len() - 1) as f64;
    Some(span.round() as usize)
}

fn latent_table(lat: &crate::analysis::LatentSeries) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut header = lat.csv_header();
    header.extend((0..lat.alphas.cols()).map(|j| format!("alpha{j}")));
    let rows = lat
        .csv_rows()
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.extend_from_slice(lat.alphas.row(i));
            r
        })
        .collect();
    (header, rows)
}

fn analyze_test_orbit(
    acc: &Acceptance,
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &ExperimentData,
    out: &mut SeedAnalysis,
    tables: &mut Tables,
) -> Result<()> {
    let test = test_orbit_series(data, cfg.context_len)?;
    out.test_mse = Some(evaluate_mse(params, cfg, &test.window_set(Some(Split::Test)))?);
    if cfg.arch != Architecture::Transformer {
        return Ok(());
    }
    let states = data
        .states
        .get(&TEST_ORBIT_ID)
        .ok_or_else(|| Error::MissingArtifact("test orbit states".into()))?;
    let names: Vec<String> = (0..states.cols()).map(|j| format!("s{j}")).collect();
    let lat = latent_series(params, cfg, &test.series[0].values, Some((&names, states)))?;
    let (h, rows) = latent_table(&lat);
    tables.add("latent", h, rows);
    out.attention = Some(attention_summary(&lat.alphas));
    let x = lat.annotation("s0").expect("state annotation");
    let v = lat.annotation("s1").expect("state annotation");
    match phase_separation(&lat.z, &x, &v, acc.phase_x_tol, acc.phase_central) {
        Ok(ps) => out.phase = Some(ps),
        Err(e) => out.notes.push(format!("phase separation: {e}")),
    }
    if cfg.d_model >= 2 {
        if let Some(period) = period_in_samples(&x) {
            match closure_check(&lat.r, period) {
                Ok(c) => out.closure = Some(c),
                Err(e) => out.notes.push(format!("closure: {e}")),
            }
        }
    }
    Ok(())
}

/// Last-token latents of the given windows, with the state at the last token.
fn window_latents(
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &ExperimentData,
    ds: &DelayDataset,
    idx: &[usize],
) -> Result<(Mat, Mat, Mat)> {
    let l = cfg.context_len;
    let td = ds.token_dim();
    let set = ds.window_set_for(idx);
    let sd = data.states.values().next().map_or(0, Mat::cols);
    let mut r = Mat::zeros(0, cfg.d_model);
    let mut alphas = Mat::zeros(0, l);
    let mut st = Mat::zeros(0, sd);
    for (k, &i) in idx.iter().enumerate() {
        let w = &set.inputs[k * l * td..(k + 1) * l * td];
        let tr = forward(params, cfg, w)?;
        r.push_row(tr.r.row(l - 1));
        alphas.push_row(tr.last_alpha());
        let o = ds.origin(i);
        let id = ds.series[o.series].id;
        st.push_row(data.state(id, o.offset + l - 1)?);
    }
    Ok((r, alphas, st))
}

fn analyze_manifold(
    acc: &Acceptance,
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &ExperimentData,
    ds: &DelayDataset,
    out: &mut SeedAnalysis,
    tables: &mut Tables,
) -> Result<()> {
    let idx = ds.indices(Split::Test);
    out.test_mse = Some(evaluate_mse(params, cfg, &ds.window_set_for(&idx))?);
    if cfg.arch != Architecture::Transformer {
        return Ok(());
    }
    let (r, alphas, st) = window_latents(cfg, params, data, ds, &idx)?;
    out.attention = Some(attention_summary(&alphas));
    let mut header: Vec<String> = (0..r.cols()).map(|j| format!("r{j}")).collect();
    header.extend((0..st.cols()).map(|j| format!("phi{}", j + 1)));
    tables.add(
        "latent",
        header,
        (0..r.rows())
            .map(|i| {
                let mut row = r.row(i).to_vec();
                row.extend_from_slice(st.row(i));
                row
            })
            .collect(),
    );
    match effective_dimension(&r, acc.dimension_tol) {
        Ok(d) => {
            out.dimension = Some(DimensionSummary {
                dimension: d.dimension,
                ratios: d.ratios.clone(),
                n_points: r.rows(),
            })
        }
        Err(e) => out.notes.push(format!("effective dimension: {e}")),
    }
    let modes = st.cols().min(2);
    let r2: Result<Vec<f64>> = (0..modes)
        .map(|k| mode_predictability(&r, &st.col(k), k as u64))
        .collect();
    match r2 {
        Ok(v) => out.mode_r2 = Some(v),
        Err(e) => out.notes.push(format!("mode predictability: {e}")),
    }
    Ok(())
}

fn analyze_sweep(
    p: &SweepProtocol,
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &ExperimentData,
    ds: &DelayDataset,
    out: &mut SeedAnalysis,
    tables: &mut Tables,
) -> Result<()> {
    let idx = ds.indices(Split::Test);
    out.test_mse = Some(evaluate_mse(params, cfg, &ds.window_set_for(&idx))?);
    let (lo, hi) = p.mu_range;
    let mu_of = |i: usize| -> Result<f64> {
        let c = data.observed.series[ds.origin(i).series]
            .cond
            .ok_or_else(|| Error::invalid("sweep series lacks its parameter"))?;
        Ok(lo + c * (hi - lo))
    };
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &idx {
        let mu = mu_of(i)?;
        let k = p
            .mus
            .iter()
            .position(|&m| (m - mu).abs() < 1e-9 * (hi - lo))
            .ok_or_else(|| Error::invalid("series parameter not in the sweep"))?;
        groups.entry(k).or_default().push(i);
    }
    let mut cond_mse = Vec::new();
    for (&k, g) in &groups {
        cond_mse.push(CondError {
            mu: p.mus[k],
            mse: evaluate_mse(params, cfg, &ds.window_set_for(g))?,
            n_windows: g.len(),
        });
    }
    out.worst_cond_mse = cond_mse.iter().map(|c| c.mse).reduce(f64::max);
    out.cond_mse = Some(cond_mse);
    if cfg.arch != Architecture::Transformer {
        return Ok(());
    }
    let (r, _, st) = window_latents(cfg, params, data, ds, &idx)?;
    let pos: BTreeMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let group_mats: Vec<Mat> = groups
        .values()
        .map(|g| Mat::from_rows(&g.iter().map(|i| r.row(pos[i]).to_vec()).collect::<Vec<_>>()))
        .collect();
    match cycle_separation(&group_mats) {
        Ok(c) => out.separation = Some(c),
        Err(e) => out.notes.push(format!("cycle separation: {e}")),
    }
    let mut header: Vec<String> = (0..r.cols()).map(|j| format!("r{j}")).collect();
    header.extend(["mu".to_string(), "re_z".into(), "im_z".into()]);
    tables.add(
        "latent",
        header,
        idx.iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut row = r.row(k).to_vec();
                row.push(mu_of(i).unwrap_or(f64::NAN));
                row.extend_from_slice(st.row(k));
                row
            })
            .collect(),
    );
    match reconstruction_folds(&r, &st, p.reconstruction_folds, p.data_seed) {
        Ok(e) => out.reconstruction_error = Some(e),
        Err(e) => out.notes.push(format!("reconstruction: {e}")),
    }
    Ok(())
}

/// K-fold kernel-ridge regression from latents to full states; relative RMS error
/// `‖ŷ − y‖ / ‖y‖` on each held-out fold. Fold membership depends only on the point
/// count and `seed`, so models evaluated on the same windows share folds.
pub fn reconstruction_folds(latents: &Mat, states: &Mat, folds: usize, seed: u64) -> Result<Vec<f64>> {
    let n = latents.rows();
    if folds < 2 || n < 2 * folds {
        return Err(Error::invalid("too few points for the requested folds"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rows = |m: &Mat, ids: &[usize]| Mat::from_rows(&ids.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>());
    let mut errs = Vec::with_capacity(folds);
    for f in 0..folds {
        let test: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(k, _)| k % folds != f)
            .map(|(_, &i)| i)
            .take(RECONSTRUCTION_MAX_TRAIN)
            .collect();
        let model = KernelRidge::fit(&rows(latents, &train), &rows(states, &train), None, &RIDGE_GRID)?;
        let truth = rows(states, &test);
        let pred = model.predict(&rows(latents, &test));
        let num: f64 = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = truth.data().iter().map(|b| b * b).sum();
        errs.push((num / den).sqrt());
    }
    Ok(errs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_crossing_period() {
        let x: Vec<f64> = (0..400)
            .map(|i| (std::f64::consts::TAU * i as f64 / 40.0 + 0.1).sin())
            .collect();
        assert_eq!(period_in_samples(&x), Some(40));
        assert_eq!(period_in_samples(&[1.0, 2.0]), None);
    }

    #[test]
    fn reconstruction_of_an_injective_map_is_accurate() {
        let n = 200;
        let lat = Mat::from_rows(
            &(0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect::<Vec<_>>(),
        );
        let st = Mat::from_rows(
            &(0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    vec![2.0 * t.cos(), (2.0 * t).sin() + 3.0]
                })
                .collect::<Vec<_>>(),
        );
        let e = reconstruction_folds(&lat, &st, 5, 0).unwrap();
        assert_eq!(e.len(), 5);
        assert!(e.iter().all(|&v| v < 1e-2), "{e:?}");
        let collapsed = Mat::from_rows(
            &(0..n)
                .map(|i| vec![(std::f64::consts::TAU * i as f64 / n as f64).cos()])
                .collect::<Vec<_>>(),
        );
        let bad = reconstruction_folds(&collapsed, &st, 5, 0).unwrap();
        assert!(bad.iter().all(|&v| v > 10.0 * e.iter().cloned().fold(0.0, f64::max)));
    }

    #[test]
    fn target_peaks_respect_tolerance_and_prominence() {
        let dt = 0.04;
        let x: Vec<f64> = (0..512)
            .map(|i| (std::f64::consts::TAU * 7.1 * i as f64 * dt).sin())
            .collect();
        let acc = Acceptance::default();
        let (s, _) = spectrum_summary(&x, dt, false, &[7.118, 3.559], &acc).unwrap();
        assert!((s.dominant_hz.unwrap() - 7.1).abs() < 0.1);
        assert!(s.targets[0].present);
        assert!(!s.targets[1].present);
    }
}
