//! Mechanistic readouts of trained models: the attention-induced AR operator,
//! latent trajectories `R = Z + X_emb`, their dimensionality and geometry, and
//! kernel-ridge maps from latents to physical quantities.

mod geometry;
mod krr;
mod pca;

pub use geometry::{
    closure_check, cycle_separation, phase_separation, ClosureReport, CycleSeparation, PhaseSeparation,
};
pub use krr::{fit_reconstruction, mode_predictability, r_squared, reconstruct, KernelRidge, RIDGE_GRID};
pub use pca::{effective_dimension, DimensionReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Architecture, ForwardTrace, Head, ModelConfig, ModelParams};
use crate::tensor::Mat;

/// Tolerance of the algebraic certificate in [`extract_effective_ar`].
pub const AR_EQUIVALENCE_TOL: f64 = 1e-10;

/// Linear recursion realized by an attention-only model on one window:
/// `ŷ = Σ_i x_i β_i + C` with `β_i = α_i M` (row convention, `M = W_emb W_V W_O`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAR {
    /// Last attention row, oldest token first.
    pub alphas: Vec<f64>,
    /// `token_dim × p` value-output composite.
    pub m: Mat,
    pub betas: Vec<Mat>,
    /// Positional-encoding contribution `Σ α_i P_i W_V W_O` (zero without encodings).
    pub pe_constant: Vec<f64>,
    /// Certified `|ŷ − Σ x_i β_i − C|`.
    pub residual: f64,
}

impl EffectiveAR {
    /// AR coefficients `c_k` (lag 1 first) of a scalar model.
    pub fn ar_coeffs(&self) -> Result<Vec<f64>> {
        if self.m.shape() != (1, 1) {
            return Err(Error::invalid("AR coefficients need scalar tokens and outputs"));
        }
        Ok(self.betas.iter().rev().map(|b| b[(0, 0)]).collect())
    }

    /// Every β entry is zero or has the sign of the matching `M` entry.
    pub fn betas_share_sign_of_m(&self) -> bool {
        self.betas.iter().all(|b| {
            b.data()
                .iter()
                .zip(self.m.data())
                .all(|(&bv, &mv)| bv == 0.0 || bv.signum() == mv.signum())
        })
    }
}

/// Read the effective AR operator off a trace of a linear-head model and certify it
/// against the forward prediction.
pub fn extract_effective_ar(
    trace: &ForwardTrace,
    window: &[f64],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<EffectiveAR> {
    if cfg.arch != Architecture::Transformer || cfg.head != Head::Linear {
        return Err(Error::invalid(
            "effective AR extraction requires an attention-only linear-head model",
        ));
    }
    let td = cfg.token_dim();
    let l = cfg.context_len;
    if window.len() != l * td {
        return Err(Error::DimensionMismatch {
            expected: l * td,
            got: window.len(),
        });
    }
    let vo = params
        .tensor("W_V")
        .expect("transformer")
        .matmul(&params.tensor("W_O").expect("linear head"));
    let m = params.embedding(cfg).matmul(&vo);
    let alphas = trace.last_alpha().to_vec();
    let betas: Vec<Mat> = alphas.iter().map(|&a| m.scale(a)).collect();
    let p = cfg.input_dim;
    let mut pe_constant = vec![0.0; p];
    if let Some(pe) = params.tensor("P") {
        let pvo = pe.matmul(&vo);
        for (i, &a) in alphas.iter().enumerate() {
            for c in 0..p {
                pe_constant[c] += a * pvo[(i, c)];
            }
        }
    }
    let mut recon = pe_constant.clone();
    for (i, b) in betas.iter().enumerate() {
        let x = Mat::from_vec(1, td, window[i * td..(i + 1) * td].to_vec());
        let y = x.matmul(b);
        for c in 0..p {
            recon[c] += y[(0, c)];
        }
    }
    let scale = trace.prediction.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let residual = recon
        .iter()
        .zip(&trace.prediction)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > AR_EQUIVALENCE_TOL * scale {
        return Err(Error::Certificate(format!(
            "effective AR does not reproduce the prediction (residual {residual:e})"
        )));
    }
    Ok(EffectiveAR {
        alphas,
        m,
        betas,
        pe_constant,
        residual,
    })
}

/// Per-step last-token activations along a series, with aligned annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeries {
    pub z: Mat,
    pub x_emb: Mat,
    /// `Z + X_emb`.
    pub r: Mat,
    /// Last attention row per step.
    pub alphas: Mat,
    pub prediction: Mat,
    pub annotation_names: Vec<String>,
    /// One row per step; aligned with the last token of each window.
    pub annotations: Mat,
}

impl LatentSeries {
    pub fn len(&self) -> usize {
        self.r.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.r.rows() == 0
    }

    pub fn annotation(&self, name: &str) -> Option<Vec<f64>> {
        self.annotation_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.annotations.col(j))
    }

    /// Row-major CSV rows: `r*, z*, annotations*`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.r.cols()).map(|j| format!("r{j}")).collect();
        h.extend((0..self.z.cols()).map(|j| format!("z{j}")));
        h.extend(self.annotation_names.iter().cloned());
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut row = self.r.row(i).to_vec();
                row.extend_from_slice(self.z.row(i));
                if self.annotations.cols() > 0 {
                    row.extend_from_slice(self.annotations.row(i));
                }
                row
            })
            .collect()
    }
}

/// Slide the context window along `series` (`T × token_dim`) and record the
/// last-token latents. `annotations`, if given, has `T` rows; row `i + L − 1` is
/// attached to window `i`.
pub fn latent_series(
    params: &ModelParams,
    cfg: &ModelConfig,
    series: &Mat,
    annotations: Option<(&[String], &Mat)>,
) -> Result<LatentSeries> {
    let l = cfg.context_len;
    let t = series.rows();
    if series.cols() != cfg.token_dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.token_dim(),
            got: series.cols(),
        });
    }
    if t < l + 1 {
        return Err(Error::invalid(format!("series of length {t} shorter than L + 1")));
    }
    let (names, ann) = match annotations {
        Some((n, a)) => {
            if a.rows() != t || a.cols() != n.len() {
                return Err(Error::DimensionMismatch {
                    expected: t,
                    got: a.rows(),
                });
            }
            (n.to_vec(), Some(a))
        }
        None => (Vec::new(), None),
    };
    let d = cfg.d_model;
    let mut out = LatentSeries {
        z: Mat::zeros(0, d),
        x_emb: Mat::zeros(0, d),
        r: Mat::zeros(0, d),
        alphas: Mat::zeros(0, l),
        prediction: Mat::zeros(0, cfg.input_dim),
        annotation_names: names.clone(),
        annotations: Mat::zeros(0, names.len()),
    };
    let td = cfg.token_dim();
    for i in 0..=(t - l) {
        let w = &series.data()[i * td..(i + l) * td];
        let tr = forward(params, cfg, w)?;
        out.z.push_row(tr.z.row(l - 1));
        out.x_emb.push_row(tr.x_emb.row(l - 1));
        out.r.push_row(tr.r.row(l - 1));
        out.alphas.push_row(tr.last_alpha());
        out.prediction.push_row(&tr.prediction);
        if let Some(a) = ann {
            out.annotations.push_row(a.row(i + l - 1));
        }
    }
    Ok(out)
}

/// Shannon entropy (nats) of a probability vector.
pub fn attention_entropy(alpha: &[f64]) -> f64 {
    -alpha.iter().filter(|&&a| a > 0.0).map(|&a| a * a.ln()).sum::<f64>()
}

/// Total-variation distance from the uniform distribution.
pub fn tv_from_uniform(alpha: &[f64]) -> f64 {
    let u = 1.0 / alpha.len() as f64;
    0.5 * alpha.iter().map(|a| (a - u).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub mean_entropy: f64,
    /// `ln L`, the entropy of uniform attention.
    pub max_entropy: f64,
    pub mean_tv_from_uniform: f64,
    pub mean_alpha: Vec<f64>,
}

pub fn attention_summary(alphas: &Mat) -> AttentionSummary {
    let n = alphas.rows().max(1) as f64;
    let l = alphas.cols();
    let mut mean_alpha = vec![0.0; l];
    let (mut h, mut tv) = (0.0, 0.0);
    for row in alphas.iter_rows() {
        h += attention_entropy(row);
        tv += tv_from_uniform(row);
        for (m, a) in mean_alpha.iter_mut().zip(row) {
            *m += a / n;
        }
    }
    AttentionSummary {
        mean_entropy: h / n,
        max_entropy: (l as f64).ln(),
        mean_tv_from_uniform: tv / n,
        mean_alpha,
    }
}
