use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forward::{evaluate_mse, loss_and_grad, Workspace};
use super::{init_params, Architecture, ModelConfig, ModelParams};
use crate::datasets::{DelayDataset, Split, WindowSet};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Final step size of a cosine decay over `epochs`; constant step when absent.
    #[serde(default)]
    pub lr_final: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Seed of the mini-batch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            lr_final: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            epochs: 3000,
            patience: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.lr_final.is_some_and(|f| !(f > 0.0)) {
            return Err(Error::invalid("step sizes must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("invalid moment parameters"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_final {
            None => self.lr,
            Some(f) if self.epochs > 1 => {
                let x = epoch as f64 / (self.epochs - 1) as f64;
                f + 0.5 * (self.lr - f) * (1.0 + (std::f64::consts::PI * x).cos())
            }
            Some(_) => self.lr,
        }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, tcfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: tcfg.beta1,
            beta2: tcfg.beta2,
            eps: tcfg.eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub shuffle_seed: u64,
    pub fingerprint: String,
    pub n_params: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    #[serde(default)]
    pub test_mse: Option<f64>,
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn save(&self, json: &Path, csv: &Path) -> Result<()> {
        io::write_json(json, self)?;
        io::write_csv(
            csv,
            &["epoch", "train_loss", "val_loss", "lr"],
            self.epochs
                .iter()
                .map(|e| vec![e.epoch as f64, e.train_loss, e.val_loss, e.lr]),
        )
    }
}

fn check_data(cfg: &ModelConfig, data: &WindowSet, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid(format!("{what} split is empty")));
    }
    if data.token_dim != cfg.token_dim() || data.out_dim != cfg.input_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.token_dim(),
            got: data.token_dim,
        });
    }
    if cfg.arch == Architecture::Transformer && data.l != cfg.context_len {
        return Err(Error::DimensionMismatch {
            expected: cfg.context_len,
            got: data.l,
        });
    }
    Ok(())
}

/// Mini-batch Adam on the mean squared one-step error with early stopping on
/// validation loss. Returns the best-validation parameters.
pub fn train(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train_set: &WindowSet,
    val_set: &WindowSet,
) -> Result<(ModelParams, TrainReport)> {
    tcfg.validate()?;
    check_data(cfg, train_set, "train")?;
    check_data(cfg, val_set, "validation")?;
    let start = Instant::now();
    let mut params = init_params(cfg)?;
    let mut best = params.clone();
    let mut opt = Adam::new(params.len(), tcfg);
    let mut grad = vec![0.0; params.len()];
    let mut ws = Workspace::new(cfg, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..train_set.n).collect();
    let mut report = TrainReport {
        seed: cfg.seed,
        shuffle_seed: tcfg.seed,
        fingerprint: io::sha256_bytes(&serde_json::to_vec(&(cfg, tcfg))?),
        n_params: params.len(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        test_mse: None,
        wall_time_s: 0.0,
    };
    let diverged = |epoch: usize, mut report: TrainReport, start: &Instant| {
        report.wall_time_s = start.elapsed().as_secs_f64();
        Error::Diverged {
            epoch,
            report: Box::new(report),
        }
    };
    for epoch in 0..tcfg.epochs {
        let lr = tcfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in order.chunks(tcfg.batch_size) {
            let loss = match loss_and_grad(&params, cfg, train_set, batch, &mut grad, &mut ws) {
                Ok(l) => l,
                Err(Error::NonFinite(_)) => return Err(diverged(epoch, report, &start)),
                Err(e) => return Err(e),
            };
            sum += loss * batch.len() as f64;
            count += batch.len();
            opt.step(&mut params.values, &grad, lr);
        }
        let val = match evaluate_mse(&params, cfg, val_set) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFinite(_)) => return Err(diverged(epoch, report, &start)),
            Err(e) => return Err(e),
        };
        report.epochs.push(EpochLog {
            epoch,
            train_loss: sum / count as f64,
            val_loss: val,
            lr,
        });
        if val < report.best_val_loss {
            report.best_val_loss = val;
            report.best_epoch = epoch;
            best.values.copy_from_slice(&params.values);
        } else if epoch - report.best_epoch >= tcfg.patience {
            report.stopped_early = true;
            break;
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((best, report))
}

/// [`train`] on the train and validation splits of a dataset.
pub fn train_dataset(cfg: &ModelConfig, tcfg: &TrainConfig, ds: &DelayDataset) -> Result<(ModelParams, TrainReport)> {
    let tr = ds.window_set(Some(Split::Train));
    let va = ds.window_set(Some(Split::Val));
    train(cfg, tcfg, &tr, &va)
}
