use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::SdofParams;
use crate::error::{Error, Result};

/// Autoregressive model `x_{t+1} = Σ_k coeffs[k−1] x_{t+1−k} + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARModel {
    pub coeffs: Vec<f64>,
    pub dt: f64,
    pub noise_var: f64,
}

impl ARModel {
    pub fn new(coeffs: Vec<f64>, dt: f64, noise_var: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("AR model needs at least one coefficient"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("AR sampling interval must be positive"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !(noise_var >= 0.0) {
            return Err(Error::invalid("AR coefficients must be finite, noise_var >= 0"));
        }
        Ok(ARModel { coeffs, dt, noise_var })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// One-step prediction from a history whose last element is the most recent sample.
    pub fn predict(&self, history: &[f64]) -> f64 {
        let n = history.len();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * history[n - 1 - k])
            .sum()
    }

    /// Noise-free continuation of `init` (oldest first) to a total of `len` samples.
    pub fn simulate(&self, init: &[f64], len: usize) -> Vec<f64> {
        let mut out = init.to_vec();
        while out.len() < len {
            let next = self.predict(&out);
            out.push(next);
        }
        out.truncate(len);
        out
    }
}

/// Exact AR(2) discretisation of the underdamped SDOF free response.
///
/// `c1 = 2 e^{−ζω_n Δt} cos(ω_d Δt)`, `c2 = −e^{−2ζω_n Δt}`. The innovation variance
/// is zero; spectra of such a model are reported with unit variance (shape only).
pub fn sdof_ar2_closed_form(p: &SdofParams, dt: f64) -> Result<ARModel> {
    p.require_underdamped()?;
    let sigma = p.zeta() * p.omega_n();
    let c1 = 2.0 * (-sigma * dt).exp() * (p.omega_d() * dt).cos();
    let c2 = -(-2.0 * sigma * dt).exp();
    ARModel::new(vec![c1, c2], dt, 0.0)
}

/// Least-squares AR(`order`) fit (SVD solve of the lagged design matrix).
pub fn fit_ar(series: &[f64], order: usize, dt: f64) -> Result<ARModel> {
    if order == 0 {
        return Err(Error::invalid("AR order must be >= 1"));
    }
    if series.len() <= 2 * order + 1 {
        return Err(Error::invalid(format!(
            "series of length {} too short for AR({order})",
            series.len()
        )));
    }
    let rows = series.len() - order;
    let x = DMatrix::from_fn(rows, order, |r, k| series[r + order - 1 - k]);
    let y = DVector::from_fn(rows, |r, _| series[r + order]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::RankDeficient);
    }
    let c = svd
        .solve(&y, 1e-14 * smax)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let resid = &y - &x * &c;
    let noise_var = resid.norm_squared() / rows as f64;
    ARModel::new(c.iter().copied().collect(), dt, noise_var)
}
