use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Candidate ridge parameters for leave-one-out selection.
pub const RIDGE_GRID: [f64; 7] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

/// Largest training set used by [`mode_predictability`]; larger inputs are subsampled.
pub const MAX_TRAIN_POINTS: usize = 600;

/// Gaussian-kernel ridge regression `f(x) = ȳ + Σ_j a_j k(x, x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidge {
    pub bandwidth: f64,
    pub ridge: f64,
    pub x_train: Mat,
    pub coef: Mat,
    pub y_mean: Vec<f64>,
    /// Mean squared leave-one-out error at the chosen ridge.
    pub loo_mse: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median of all pairwise distances (zero distances excluded).
pub fn median_pairwise_distance(x: &Mat) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(x.row(i), x.row(j)).sqrt();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, f64::total_cmp).1
}

impl KernelRidge {
    /// Fit with bandwidth = median pairwise distance (unless given) and the
    /// ridge from `ridges` with the smallest leave-one-out error.
    pub fn fit(x: &Mat, y: &Mat, bandwidth: Option<f64>, ridges: &[f64]) -> Result<Self> {
        let n = x.rows();
        if n < 2 || y.rows() != n {
            return Err(Error::DimensionMismatch {
                expected: n.max(2),
                got: y.rows(),
            });
        }
        if ridges.is_empty() || ridges.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("ridge candidates must be non-negative"));
        }
        let bw = bandwidth.unwrap_or_else(|| median_pairwise_distance(x));
        if !(bw > 0.0) {
            return Err(Error::Singular("all latent points coincide".into()));
        }
        let out = y.cols();
        let mut y_mean = vec![0.0; out];
        for row in y.iter_rows() {
            for (m, v) in y_mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let yc = DMatrix::from_fn(n, out, |i, c| y[(i, c)] - y_mean[c]);
        let g = -0.5 / (bw * bw);
        let k = DMatrix::from_fn(n, n, |i, j| (g * sq_dist(x.row(i), x.row(j))).exp());
        let eig = k.symmetric_eigen();
        let u = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let uty = u.transpose() * &yc;
        let lmax = lam.iter().cloned().fold(0.0, f64::max);
        let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
        for &r in ridges {
            let shifted: Vec<f64> = lam.iter().map(|l| l + r).collect();
            if shifted.iter().any(|s| !(*s > 1e-14 * lmax)) {
                continue;
            }
            let mut scaled = uty.clone();
            for (kk, s) in shifted.iter().enumerate() {
                for c in 0..out {
                    scaled[(kk, c)] /= s;
                }
            }
            let coef = u * scaled;
            let mut loo = 0.0;
            for i in 0..n {
                let gii: f64 = (0..n).map(|kk| u[(i, kk)].powi(2) / shifted[kk]).sum();
                for c in 0..out {
                    loo += (coef[(i, c)] / gii).powi(2);
                }
            }
            let loo = loo / (n * out) as f64;
            if loo.is_finite() && best.as_ref().is_none_or(|b| loo < b.0) {
                best = Some((loo, r, coef));
            }
        }
        let (loo_mse, ridge, coef) =
            best.ok_or_else(|| Error::Singular("kernel system is singular for every ridge".into()))?;
        let coef = Mat::from_vec(n, out, coef.transpose().as_slice().to_vec());
        Ok(KernelRidge {
            bandwidth: bw,
            ridge,
            x_train: x.clone(),
            coef,
            y_mean,
            loo_mse,
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        let g = -0.5 / (self.bandwidth * self.bandwidth);
        let mut out = self.y_mean.clone();
        for j in 0..self.x_train.rows() {
            let kv = (g * sq_dist(x, self.x_train.row(j))).exp();
            for (o, a) in out.iter_mut().zip(self.coef.row(j)) {
                *o += kv * a;
            }
        }
        out
    }

    pub fn predict(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(0, self.coef.cols());
        for row in x.iter_rows() {
            out.push_row(&self.predict_one(row));
        }
        out
    }
}

/// Pooled coefficient of determination `1 − SS_res/SS_tot` over all columns.
pub fn r_squared(pred: &Mat, truth: &Mat) -> f64 {
    let n = truth.rows() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for c in 0..truth.cols() {
        let col = truth.col(c);
        let m = col.iter().sum::<f64>() / n;
        for i in 0..truth.rows() {
            ss_res += (pred[(i, c)] - truth[(i, c)]).powi(2);
            ss_tot += (truth[(i, c)] - m).powi(2);
        }
    }
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Held-out R² of a kernel-ridge map from latents to `target`, on a seeded half/half split.
pub fn mode_predictability(latents: &Mat, target: &[f64], seed: u64) -> Result<f64> {
    let n = latents.rows();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: target.len(),
        });
    }
    if n < 20 {
        return Err(Error::invalid(format!("need at least 20 points, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, te) = idx.split_at(n / 2);
    let tr = &tr[..tr.len().min(MAX_TRAIN_POINTS)];
    let xs = |ids: &[usize]| Mat::from_rows(&ids.iter().map(|&i| latents.row(i).to_vec()).collect::<Vec<_>>());
    let ys = |ids: &[usize]| Mat::column(&ids.iter().map(|&i| target[i]).collect::<Vec<_>>());
    let model = KernelRidge::fit(&xs(tr), &ys(tr), None, &RIDGE_GRID)?;
    Ok(r_squared(&model.predict(&xs(te)), &ys(te)))
}

/// Kernel-ridge map from latents to full fields.
pub fn fit_reconstruction(latents: &Mat, fields: &Mat) -> Result<KernelRidge> {
    KernelRidge::fit(latents, fields, None, &RIDGE_GRID)
}

pub fn reconstruct(model: &KernelRidge, latent: &[f64]) -> Vec<f64> {
    model.predict_one(latent)
}
