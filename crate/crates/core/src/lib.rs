//! Minimal single-layer, single-head attention models applied to dynamical
//! systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: model systems, an adaptive Runge–Kutta integrator with dense
//!   output, and closed-form references for the linear oscillators.
//! - [`lintheory`]: autoregressive (AR) models, spectra and the sign
//!   feasibility test for convex (softmax) attention weights.
//! - [`datasets`]: observation operators, delay windows and trajectory splits.
//! - [`model`]: the attention model and MLP baseline, exact gradients, Adam
//!   training and autoregressive rollout.
//! - [`analysis`]: attention-to-AR extraction, latent geometry metrics and
//!   kernel ridge reconstruction.
//! - [`experiments`]: end-to-end experiment protocols with on-disk artifacts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lintheory;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Mat;
