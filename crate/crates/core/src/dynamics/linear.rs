//! Linear structural oscillators and their closed-form references.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Single-degree-of-freedom mass–spring–damper `m ẍ + c ẋ + k x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdofParams {
    pub m: f64,
    pub c: f64,
    pub k: f64,
}

impl SdofParams {
    pub fn new(m: f64, c: f64, k: f64) -> Result<Self> {
        let p = SdofParams { m, c, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.c >= 0.0 && self.k > 0.0) {
            return Err(Error::invalid(format!(
                "SDOF requires m > 0, c >= 0, k > 0 (got m={}, c={}, k={})",
                self.m, self.c, self.k
            )));
        }
        Ok(())
    }

    /// Undamped angular natural frequency ω_n (rad/s).
    pub fn omega_n(&self) -> f64 {
        (self.k / self.m).sqrt()
    }

    /// Damping ratio ζ = c / (2√(km)).
    pub fn zeta(&self) -> f64 {
        self.c / (2.0 * (self.k * self.m).sqrt())
    }

    /// Damped angular frequency ω_d = ω_n √(1 − ζ²); NaN when not underdamped.
    pub fn omega_d(&self) -> f64 {
        self.omega_n() * (1.0 - self.zeta().powi(2)).sqrt()
    }

    pub fn is_underdamped(&self) -> bool {
        self.zeta() < 1.0
    }

    pub(crate) fn require_underdamped(&self) -> Result<()> {
        self.validate()?;
        if !self.is_underdamped() {
            return Err(Error::invalid(format!(
                "damping ratio {} >= 1: only the underdamped regime is implemented",
                self.zeta()
            )));
        }
        Ok(())
    }
}

/// Natural frequency `√(k/m) / 2π` in Hz.
pub fn sdof_natural_frequency(p: &SdofParams) -> f64 {
    p.omega_n() / (2.0 * PI)
}

/// Exact underdamped free response `(x(t), v(t))` from `(x0, v0)`.
pub fn sdof_closed_form(p: &SdofParams, x0: f64, v0: f64, t: f64) -> Result<(f64, f64)> {
    p.require_underdamped()?;
    let sigma = p.zeta() * p.omega_n();
    let wd = p.omega_d();
    let a = x0;
    let b = (v0 + sigma * x0) / wd;
    let (s, c) = (wd * t).sin_cos();
    let env = (-sigma * t).exp();
    let x = env * (a * c + b * s);
    let v = env * (-sigma * (a * c + b * s) + wd * (-a * s + b * c));
    Ok((x, v))
}

/// Two coupled masses, wall–m1–m2 chain with dampers in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDofParams {
    pub m1: f64,
    pub m2: f64,
    pub c1: f64,
    pub c2: f64,
    pub k1: f64,
    pub k2: f64,
}

impl TwoDofParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m1 > 0.0 && self.m2 > 0.0) {
            return Err(Error::invalid("2-DOF masses must be positive"));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::invalid(
                "2-DOF stiffnesses must be positive (K must be positive definite)",
            ));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return Err(Error::invalid("2-DOF dampings must be non-negative"));
        }
        Ok(())
    }

    pub fn mass_matrix(&self) -> [[f64; 2]; 2] {
        [[self.m1, 0.0], [0.0, self.m2]]
    }

    pub fn damping_matrix(&self) -> [[f64; 2]; 2] {
        [[self.c1 + self.c2, -self.c2], [-self.c2, self.c2]]
    }

    pub fn stiffness_matrix(&self) -> [[f64; 2]; 2] {
        [[self.k1 + self.k2, -self.k2], [-self.k2, self.k2]]
    }
}

/// Undamped modal frequencies (Hz, ascending) and mass-normalised mode shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalSolution {
    pub frequencies_hz: [f64; 2],
    /// `modes[j]` is the mode shape belonging to `frequencies_hz[j]`.
    pub modes: [[f64; 2]; 2],
}

/// Solve `K φ = ω² M φ` through the symmetric form `M^{-1/2} K M^{-1/2}`.
pub fn modal_frequencies_2dof(p: &TwoDofParams) -> Result<ModalSolution> {
    p.validate()?;
    let k = p.stiffness_matrix();
    let (s1, s2) = (1.0 / p.m1.sqrt(), 1.0 / p.m2.sqrt());
    let a = nalgebra::Matrix2::new(
        k[0][0] * s1 * s1,
        k[0][1] * s1 * s2,
        k[1][0] * s2 * s1,
        k[1][1] * s2 * s2,
    );
    let eig = a.symmetric_eigen();
    let mut order = [0usize, 1];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut freqs = [0.0; 2];
    let mut modes = [[0.0; 2]; 2];
    for (slot, &idx) in order.iter().enumerate() {
        let lam = eig.eigenvalues[idx];
        if lam <= 0.0 {
            return Err(Error::invalid("stiffness matrix is not positive definite"));
        }
        freqs[slot] = lam.sqrt() / (2.0 * PI);
        let v = eig.eigenvectors.column(idx);
        modes[slot] = [v[0] * s1, v[1] * s2];
    }
    Ok(ModalSolution {
        frequencies_hz: freqs,
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_frequencies_of_the_single_oscillator() {
        let f = sdof_natural_frequency(&SdofParams::new(1.0, 0.5, 2000.0).unwrap());
        assert!((f - 7.118).abs() < 5e-4, "{f}");
        let f = sdof_natural_frequency(&SdofParams::new(1.0, 0.5, 500.0).unwrap());
        assert!((f - 3.559).abs() < 5e-4, "{f}");
        let f = sdof_natural_frequency(&SdofParams::new(4.0, 0.0, 4.0).unwrap());
        assert!((f - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_initial_condition_and_undamped_period() {
        let p = SdofParams::new(1.0, 0.5, 2000.0).unwrap();
        let (x, v) = sdof_closed_form(&p, 0.01, 0.3, 0.0).unwrap();
        assert!((x - 0.01).abs() < 1e-16 && (v - 0.3).abs() < 1e-15);

        let p = SdofParams::new(1.0, 0.0, 2000.0).unwrap();
        let period = 2.0 * PI / p.omega_n();
        let (x, v) = sdof_closed_form(&p, 1.0, 0.0, period).unwrap();
        assert!((x - 1.0).abs() < 1e-12 && v.abs() < 1e-9, "{x} {v}");
    }

    #[test]
    fn closed_form_satisfies_the_equation_of_motion() {
        // Central second difference of x(t) against −(c v + k x)/m.
        let p = SdofParams::new(1.3, 0.7, 300.0).unwrap();
        let h = 1e-4;
        for &t in &[0.1, 0.37, 1.2] {
            let (xm, _) = sdof_closed_form(&p, 0.02, -0.1, t - h).unwrap();
            let (x, v) = sdof_closed_form(&p, 0.02, -0.1, t).unwrap();
            let (xp, _) = sdof_closed_form(&p, 0.02, -0.1, t + h).unwrap();
            let acc = (xp - 2.0 * x + xm) / (h * h);
            let expect = -(p.c * v + p.k * x) / p.m;
            assert!((acc - expect).abs() < 1e-4 * expect.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn overdamped_regime_is_rejected() {
        let p = SdofParams::new(1.0, 100.0, 1.0).unwrap();
        assert!(sdof_closed_form(&p, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn modal_frequencies_match_the_two_by_two_characteristic_polynomial() {
        let p = TwoDofParams {
            m1: 1.0,
            m2: 1.0,
            c1: 0.5,
            c2: 0.5,
            k1: 1000.0,
            k2: 1500.0,
        };
        let sol = modal_frequencies_2dof(&p).unwrap();
        // det(K − λI) = λ² − tr λ + det for K = [[2500, −1500], [−1500, 1500]].
        let (tr, det) = (4000.0_f64, 2500.0 * 1500.0 - 1500.0_f64 * 1500.0);
        let disc = (tr * tr / 4.0 - det).sqrt();
        let f1 = (tr / 2.0 - disc).sqrt() / (2.0 * PI);
        let f2 = (tr / 2.0 + disc).sqrt() / (2.0 * PI);
        assert!((sol.frequencies_hz[0] - f1).abs() < 1e-10);
        assert!((sol.frequencies_hz[1] - f2).abs() < 1e-10);
        assert!((f1 - 3.257).abs() < 1e-3 && (f2 - 9.524).abs() < 1e-3);
        // K φ = ω² M φ for each mode.
        let k = p.stiffness_matrix();
        for j in 0..2 {
            let w2 = (2.0 * PI * sol.frequencies_hz[j]).powi(2);
            let phi = sol.modes[j];
            for r in 0..2 {
                let lhs = k[r][0] * phi[0] + k[r][1] * phi[1];
                assert!((lhs - w2 * phi[r]).abs() < 1e-8 * w2);
            }
        }
    }

    #[test]
    fn singular_stiffness_is_rejected() {
        let p = TwoDofParams {
            m1: 1.0,
            m2: 1.0,
            c1: 0.0,
            c2: 0.0,
            k1: 1000.0,
            k2: 0.0,
        };
        assert!(modal_frequencies_2dof(&p).is_err());
    }
}
