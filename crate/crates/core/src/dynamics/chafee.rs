//! Sine-Galerkin truncation of the Chafee–Infante equation
//! `u_t = u − u³ + ν u_xx` on `[0, π]` with Dirichlet boundaries.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChafeeInfanteParams {
    pub nu: f64,
    pub n_modes: usize,
    pub grid_points: usize,
}

impl Default for ChafeeInfanteParams {
    fn default() -> Self {
        ChafeeInfanteParams {
            nu: 0.16,
            n_modes: 3,
            grid_points: 256,
        }
    }
}

impl ChafeeInfanteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::invalid("Chafee-Infante requires nu > 0"));
        }
        if self.n_modes == 0 {
            return Err(Error::invalid("Chafee-Infante requires at least one mode"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("spatial grid needs at least two points"));
        }
        Ok(())
    }

    /// Uniform grid on `[0, π]` including both Dirichlet endpoints.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        (0..n).map(|j| PI * j as f64 / (n - 1) as f64).collect()
    }
}

/// Projection coefficients of the cubic term:
/// `(2/π) ∫₀^π (Σ φ_i sin ix)³ sin kx dx = Σ_{ijl} T[k][i][j][l] φ_i φ_j φ_l`.
/// Indices are zero-based, so `get(0, 0, 0, 0)` is the mode-1 self interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    n: usize,
    values: Vec<f64>,
}

impl CubicCoefficients {
    pub fn n_modes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize, l: usize) -> f64 {
        let n = self.n;
        self.values[((k * n + i) * n + j) * n + l]
    }

    /// `Σ_{ijl} T[k][i][j][l] φ_i φ_j φ_l` for mode `k`.
    pub fn cubic(&self, k: usize, phi: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let pij = phi[i] * phi[j];
                if pij == 0.0 {
                    continue;
                }
                for l in 0..n {
                    s += self.get(k, i, j, l) * pij * phi[l];
                }
            }
        }
        s
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` via Newton iteration.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn project_all(n: usize, order: usize) -> Vec<f64> {
    let (xs, ws) = gauss_legendre(order);
    let half = PI / 2.0;
    let mut out = vec![0.0; n * n * n * n];
    for (&xi, &wi) in xs.iter().zip(&ws) {
        let x = half * (xi + 1.0);
        let s: Vec<f64> = (1..=n).map(|m| (m as f64 * x).sin()).collect();
        let wq = wi * half * 2.0 / PI;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let sij = s[k] * s[i] * s[j] * wq;
                    for l in 0..n {
                        out[((k * n + i) * n + j) * n + l] += sij * s[l];
                    }
                }
            }
        }
    }
    out
}

/// Cubic projection tensor by Gauss–Legendre quadrature, doubling the order until
/// successive estimates agree to [`QUADRATURE_TOL`].
pub fn ci_galerkin_cubic_coefficients(n_modes: usize) -> Result<CubicCoefficients> {
    if n_modes == 0 {
        return Err(Error::invalid("n_modes must be >= 1"));
    }
    let mut order = 8;
    let mut prev = project_all(n_modes, order);
    let mut delta = f64::INFINITY;
    while order <= 1024 {
        order *= 2;
        let next = project_all(n_modes, order);
        delta = prev.iter().zip(&next).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if delta < QUADRATURE_TOL {
            return Ok(CubicCoefficients {
                n: n_modes,
                values: next,
            });
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        tol: QUADRATURE_TOL,
        delta,
    })
}

/// Galerkin right-hand side `dφ_k/dt = (1 − ν k²) φ_k − P_k(u³)`.
pub fn ci_rhs(phi: &[f64], nu: f64, coeffs: &CubicCoefficients, out: &mut [f64]) {
    let n = coeffs.n_modes();
    for k in 0..n {
        let kk = (k + 1) as f64;
        out[k] = (1.0 - nu * kk * kk) * phi[k] - coeffs.cubic(k, phi);
    }
}

/// Jacobian `∂f_k/∂φ_m` of [`ci_rhs`], row-major `n × n`.
pub fn ci_jacobian(phi: &[f64], nu: f64, coeffs: &CubicCoefficients) -> Vec<f64> {
    let n = coeffs.n_modes();
    let mut jac = vec![0.0; n * n];
    for k in 0..n {
        let kk = (k + 1) as f64;
        jac[k * n + k] += 1.0 - nu * kk * kk;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let t = coeffs.get(k, i, j, l);
                    if t == 0.0 {
                        continue;
                    }
                    jac[k * n + i] -= t * phi[j] * phi[l];
                    jac[k * n + j] -= t * phi[i] * phi[l];
                    jac[k * n + l] -= t * phi[i] * phi[j];
                }
            }
        }
    }
    jac
}

/// Sine-series field `u(x) = Σ φ_k sin(kx)`; the Dirichlet endpoints are returned as exact zeros.
pub fn ci_reconstruct_field(phi: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&x| {
            if !(0.0..=PI).contains(&x) {
                return Err(Error::invalid(format!("grid point {x} outside [0, pi]")));
            }
            if x == 0.0 || x == PI {
                return Ok(0.0);
            }
            Ok(phi
                .iter()
                .enumerate()
                .map(|(k, &p)| p * ((k + 1) as f64 * x).sin())
                .sum())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // ∫ x⁸ dx over [-1,1] = 2/9, exact for 5 nodes (degree ≤ 9).
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn cubic_coefficients_match_trig_identities() {
        let t = ci_galerkin_cubic_coefficients(3).unwrap();
        // sin³x = (3 sin x − sin 3x)/4
        assert!((t.get(0, 0, 0, 0) - 0.75).abs() < 1e-10);
        assert!((t.get(2, 0, 0, 0) + 0.25).abs() < 1e-10);
        assert!(t.get(1, 0, 0, 0).abs() < 1e-10);
    }

    #[test]
    fn parity_selection_rule() {
        let t = ci_galerkin_cubic_coefficients(3).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        // one-based parity: (i+1)+(j+1)+(l+1) vs (k+1)
                        if (i + j + l + 3) % 2 != (k + 1) % 2 {
                            assert!(t.get(k, i, j, l).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(ci_galerkin_cubic_coefficients(0).is_err());
    }

    #[test]
    fn rhs_vanishes_at_origin_and_has_linear_growth_rates() {
        let t = ci_galerkin_cubic_coefficients(3).unwrap();
        let mut out = [1.0; 3];
        ci_rhs(&[0.0; 3], 0.16, &t, &mut out);
        assert_eq!(out, [0.0; 3]);
        let jac = ci_jacobian(&[0.0; 3], 0.16, &t);
        let rates = [jac[0], jac[4], jac[8]];
        for (r, e) in rates.iter().zip([0.84, 0.36, -0.44]) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
    }

    #[test]
    fn field_reconstruction_examples() {
        let y = ci_reconstruct_field(&[1.0, 0.0, 0.0], &[PI / 2.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15);
        let y = ci_reconstruct_field(&[1.0, 1.0, 1.0], &[PI / 2.0]).unwrap();
        assert!(y[0].abs() < 1e-15);
        let grid = ChafeeInfanteParams::default().grid();
        let y = ci_reconstruct_field(&[0.3, -0.2, 0.9], &grid).unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(*y.last().unwrap(), 0.0);
        assert!(ci_reconstruct_field(&[0.0; 3], &grid)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        assert!(ci_reconstruct_field(&[1.0], &[4.0]).is_err());
    }
}
