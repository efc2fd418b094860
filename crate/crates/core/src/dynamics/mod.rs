//! Continuous-time model systems, their integration, and closed-form references.

mod chafee;
mod integrator;
mod linear;

pub use chafee::{
    ci_galerkin_cubic_coefficients, ci_jacobian, ci_reconstruct_field, ci_rhs, ChafeeInfanteParams, CubicCoefficients,
    QUADRATURE_TOL,
};
pub use integrator::{dopri5, OdeSystem, StepControl};
pub use linear::{
    modal_frequencies_2dof, sdof_closed_form, sdof_natural_frequency, ModalSolution, SdofParams, TwoDofParams,
};

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdpParams {
    pub mu: f64,
}

/// Stuart–Landau normal form `ż = (μ + iω) z − (1 + i b)|z|² z`, limit cycle of radius √μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuartLandauParams {
    pub mu: f64,
    pub omega: f64,
    pub b: f64,
}

impl StuartLandauParams {
    pub fn surrogate(mu: f64) -> Self {
        StuartLandauParams { mu, omega: 1.0, b: 0.2 }
    }

    /// Angular frequency on the limit cycle.
    pub fn cycle_frequency(&self) -> f64 {
        self.omega - self.b * self.mu
    }
}

/// A system tag together with its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "system", content = "params", rename_all = "kebab-case")]
pub enum SystemSpec {
    Sdof(SdofParams),
    TwoDof(TwoDofParams),
    VanDerPol(VdpParams),
    ChafeeInfante(ChafeeInfanteParams),
    StuartLandau(StuartLandauParams),
}

impl SystemSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            SystemSpec::Sdof(_) => "sdof",
            SystemSpec::TwoDof(_) => "two-dof",
            SystemSpec::VanDerPol(_) => "van-der-pol",
            SystemSpec::ChafeeInfante(_) => "chafee-infante",
            SystemSpec::StuartLandau(_) => "stuart-landau",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Sdof(_) => 2,
            SystemSpec::TwoDof(_) => 4,
            SystemSpec::VanDerPol(_) => 2,
            SystemSpec::ChafeeInfante(p) => p.n_modes,
            SystemSpec::StuartLandau(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::Sdof(p) => p.validate(),
            SystemSpec::TwoDof(p) => p.validate(),
            SystemSpec::VanDerPol(p) => {
                if p.mu.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("Van der Pol mu must be finite"))
                }
            }
            SystemSpec::ChafeeInfante(p) => p.validate(),
            SystemSpec::StuartLandau(p) => {
                if p.mu > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("Stuart-Landau requires mu > 0"))
                }
            }
        }
    }

    /// Build the right-hand side (precomputing Galerkin coefficients where needed).
    pub fn build(&self) -> Result<System> {
        self.validate()?;
        Ok(match *self {
            SystemSpec::ChafeeInfante(p) => System::ChafeeInfante {
                nu: p.nu,
                coeffs: Arc::new(ci_galerkin_cubic_coefficients(p.n_modes)?),
            },
            SystemSpec::Sdof(p) => System::Sdof(p),
            SystemSpec::TwoDof(p) => System::TwoDof(p),
            SystemSpec::VanDerPol(p) => System::VanDerPol(p),
            SystemSpec::StuartLandau(p) => System::StuartLandau(p),
        })
    }
}

/// A ready-to-integrate vector field.
#[derive(Debug, Clone)]
pub enum System {
    Sdof(SdofParams),
    TwoDof(TwoDofParams),
    VanDerPol(VdpParams),
    ChafeeInfante { nu: f64, coeffs: Arc<CubicCoefficients> },
    StuartLandau(StuartLandauParams),
}

impl OdeSystem for System {
    fn dim(&self) -> usize {
        match self {
            System::Sdof(_) | System::VanDerPol(_) | System::StuartLandau(_) => 2,
            System::TwoDof(_) => 4,
            System::ChafeeInfante { coeffs, .. } => coeffs.n_modes(),
        }
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        match self {
            System::Sdof(p) => {
                dx[0] = x[1];
                dx[1] = -(p.c * x[1] + p.k * x[0]) / p.m;
            }
            System::TwoDof(p) => {
                // state = [x1, x2, v1, v2]
                let (c, k) = (p.damping_matrix(), p.stiffness_matrix());
                dx[0] = x[2];
                dx[1] = x[3];
                dx[2] = -(c[0][0] * x[2] + c[0][1] * x[3] + k[0][0] * x[0] + k[0][1] * x[1]) / p.m1;
                dx[3] = -(c[1][0] * x[2] + c[1][1] * x[3] + k[1][0] * x[0] + k[1][1] * x[1]) / p.m2;
            }
            System::VanDerPol(p) => {
                dx[0] = x[1];
                dx[1] = p.mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
            }
            System::ChafeeInfante { nu, coeffs } => ci_rhs(x, *nu, coeffs, dx),
            System::StuartLandau(p) => {
                let (a, y) = (x[0], x[1]);
                let r2 = a * a + y * y;
                dx[0] = p.mu * a - p.omega * y - r2 * (a - p.b * y);
                dx[1] = p.omega * a + p.mu * y - r2 * (y + p.b * a);
            }
        }
    }
}

/// Provenance of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(flatten)]
    pub system: serde_json::Value,
    pub rtol: f64,
    pub atol: f64,
    pub dt: f64,
    #[serde(default)]
    pub note: Option<String>,
}

/// Uniformly sampled state history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Mat,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    /// Apply a pointwise map to every state (e.g. modal → physical field).
    pub fn map_states(&self, dim: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Trajectory> {
        let mut states = Mat::zeros(0, dim);
        for row in self.states.iter_rows() {
            let mapped = f(row)?;
            if mapped.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: mapped.len(),
                });
            }
            states.push_row(&mapped);
        }
        Ok(Trajectory {
            times: self.times.clone(),
            states,
            meta: self.meta.clone(),
        })
    }
}

/// Per-step tolerances are this fraction of the requested ones, so that the accumulated
/// global error over a few dozen periods stays at the requested level.
pub const LOCAL_TOL_FACTOR: f64 = 0.1;

/// Sample instants `t0, t0 + dt, …` not exceeding `t1` (with a tolerance for round-off).
pub fn sample_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

/// Integrate `spec` from `x0` over `t_span`, sampling every `dt_sample` via dense output.
pub fn integrate(
    spec: &SystemSpec,
    x0: &[f64],
    t_span: (f64, f64),
    dt_sample: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory> {
    let sys = spec.build()?;
    integrate_system(&sys, spec, x0, t_span, dt_sample, rtol, atol)
}

/// As [`integrate`] but reusing an already built system (avoids recomputing coefficients).
pub fn integrate_system(
    sys: &System,
    spec: &SystemSpec,
    x0: &[f64],
    t_span: (f64, f64),
    dt_sample: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(dt_sample > 0.0) {
        return Err(Error::invalid("dt_sample must be positive"));
    }
    if t1 < t0 {
        return Err(Error::invalid("t_span must satisfy t1 >= t0"));
    }
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    let times = sample_times(t0, t1, dt_sample);
    let rows = dopri5(
        sys,
        x0,
        t0,
        t1,
        &times,
        StepControl::new(rtol * LOCAL_TOL_FACTOR, atol * LOCAL_TOL_FACTOR),
    )?;
    let states = Mat::from_rows(&rows);
    if !states.is_finite() {
        return Err(Error::NonFinite("trajectory contains non-finite states".into()));
    }
    Ok(Trajectory {
        times,
        states,
        meta: TrajectoryMeta {
            system: serde_json::to_value(spec)?,
            rtol,
            atol,
            dt: dt_sample,
            note: None,
        },
    })
}
