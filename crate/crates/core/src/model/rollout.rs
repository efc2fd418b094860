use serde::{Deserialize, Serialize};

use super::forward::{predict_into, Workspace};
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Magnitude beyond which a free run is declared divergent and truncated.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// `n × p` predicted observations, one row per step.
    pub predictions: Mat,
    pub diverged: bool,
}

impl Rollout {
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.predictions.col(c)
    }
}

/// Autoregressive free run: each prediction becomes the newest token and the window
/// slides by one. Conditioning channels of the last seed token are held fixed.
pub fn rollout(params: &ModelParams, cfg: &ModelConfig, seed_window: &[f64], n_steps: usize) -> Result<Rollout> {
    if n_steps == 0 {
        return Err(Error::invalid("rollout needs n_steps >= 1"));
    }
    let td = cfg.token_dim();
    let p = cfg.input_dim;
    if seed_window.len() < td || !seed_window.len().is_multiple_of(td) {
        return Err(Error::DimensionMismatch {
            expected: cfg.context_len * td,
            got: seed_window.len(),
        });
    }
    let cond: Vec<f64> = seed_window[seed_window.len() - td + p..].to_vec();
    let mut window = seed_window.to_vec();
    let mut ws = Workspace::new(cfg, params);
    let mut y = vec![0.0; p];
    let mut predictions = Mat::zeros(0, p);
    let mut diverged = false;
    for _ in 0..n_steps {
        predict_into(params, cfg, &window, &mut ws, &mut y)?;
        if y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            diverged = true;
            break;
        }
        predictions.push_row(&y);
        window.drain(..td);
        window.extend_from_slice(&y);
        window.extend_from_slice(&cond);
    }
    Ok(Rollout { predictions, diverged })
}

#[cfg(test)]
mod tests {
    use super::super::{init_params, predict, PosEncoding};
    use super::*;

    #[test]
    fn one_step_equals_prediction() {
        let cfg = ModelConfig::transformer_mlp(2, 3, 2, vec![4], PosEncoding::Learned, 5);
        let p = init_params(&cfg).unwrap();
        let w = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let r = rollout(&p, &cfg, &w, 1).unwrap();
        assert_eq!(r.predictions.row(0), predict(&p, &cfg, &w).unwrap().as_slice());
        assert!(!r.diverged);
    }

    #[test]
    fn feedback_matches_manual_sliding() {
        let mut cfg = ModelConfig::transformer_mlp(1, 3, 2, vec![4], PosEncoding::None, 6);
        cfg.cond_dim = 1;
        let p = init_params(&cfg).unwrap();
        let w = vec![0.1, 0.5, 0.2, 0.5, 0.3, 0.5];
        let r = rollout(&p, &cfg, &w, 3).unwrap();
        let mut manual = w.clone();
        for k in 0..3 {
            let y = predict(&p, &cfg, &manual).unwrap();
            assert_eq!(r.predictions[(k, 0)], y[0]);
            manual.drain(..2);
            manual.extend_from_slice(&[y[0], 0.5]);
        }
    }

    #[test]
    fn divergence_truncates() {
        let mut cfg = ModelConfig::attention_only(1, 1, 1, PosEncoding::None, 0);
        cfg.fixed_embedding = true;
        let mut p = init_params(&cfg).unwrap();
        for name in ["W_Q", "W_K", "W_V"] {
            p.set_tensor(name, &Mat::from_rows(&[vec![1.0]])).unwrap();
        }
        p.set_tensor("W_O", &Mat::from_rows(&[vec![10.0]])).unwrap();
        let r = rollout(&p, &cfg, &[1.0], 50).unwrap();
        assert!(r.diverged);
        assert_eq!(r.predictions.rows(), 6);
    }
}
