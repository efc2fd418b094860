//! Single-layer, single-head causal transformer for next-step prediction, an
//! MLP baseline, hand-written gradients, Adam training and free-run rollout.
//!
//! Row-vector convention: a window is an `L × token_dim` matrix, `X_emb = X W_emb + P`,
//! `Q = X_emb W_Q`, `K = X_emb W_K`, `V = X_emb W_V`, and logits are scaled by
//! `1/√d_model`. Only the last token's output is used for prediction. The MLP head
//! reads `R_n = Z_n + X_emb,n` and the linear head reads `Z_n W_O`.

mod forward;
mod rollout;
mod train;

pub use forward::{
    causal_softmax, evaluate_mse, forward, head_forward, loss_and_grad, mlp_forward, predict, predict_batch,
    ForwardTrace, Workspace,
};
pub use rollout::{rollout, Rollout, DIVERGENCE_LIMIT};
pub use train::{train, train_dataset, Adam, EpochLog, TrainConfig, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Transformer,
    /// Feed-forward map of the last token only.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Mlp,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosEncoding {
    Learned,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub(crate) fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// Observed channels `p` (also the output width).
    pub input_dim: usize,
    /// Extra conditioning channels appended to every token.
    #[serde(default)]
    pub cond_dim: usize,
    pub context_len: usize,
    pub d_model: usize,
    pub head: Head,
    #[serde(default)]
    pub mlp_hidden: Vec<usize>,
    pub pos_encoding: PosEncoding,
    pub activation: Activation,
    /// Use the identity as embedding (requires `token_dim == d_model`), so that
    /// values are `x_i + p_i` exactly.
    #[serde(default)]
    pub fixed_embedding: bool,
    #[serde(default = "default_true")]
    pub causal: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Attention-only model: linear head, no MLP.
    pub fn attention_only(input_dim: usize, context_len: usize, d_model: usize, pos: PosEncoding, seed: u64) -> Self {
        ModelConfig {
            arch: Architecture::Transformer,
            input_dim,
            cond_dim: 0,
            context_len,
            d_model,
            head: Head::Linear,
            mlp_hidden: Vec::new(),
            pos_encoding: pos,
            activation: Activation::Tanh,
            fixed_embedding: false,
            causal: true,
            seed,
        }
    }

    pub fn transformer_mlp(
        input_dim: usize,
        context_len: usize,
        d_model: usize,
        hidden: Vec<usize>,
        pos: PosEncoding,
        seed: u64,
    ) -> Self {
        ModelConfig {
            head: Head::Mlp,
            mlp_hidden: hidden,
            ..Self::attention_only(input_dim, context_len, d_model, pos, seed)
        }
    }

    /// Feed-forward baseline on the last observation.
    pub fn mlp_baseline(input_dim: usize, hidden: Vec<usize>, seed: u64) -> Self {
        ModelConfig {
            arch: Architecture::Mlp,
            input_dim,
            cond_dim: 0,
            context_len: 1,
            d_model: input_dim,
            head: Head::Mlp,
            mlp_hidden: hidden,
            pos_encoding: PosEncoding::None,
            activation: Activation::Tanh,
            fixed_embedding: false,
            causal: true,
            seed,
        }
    }

    pub fn token_dim(&self) -> usize {
        self.input_dim + self.cond_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be >= 1"));
        }
        if self.context_len == 0 {
            return Err(Error::invalid("context_len must be >= 1"));
        }
        if self.d_model == 0 {
            return Err(Error::invalid("d_model must be >= 1"));
        }
        if !self.causal {
            return Err(Error::invalid("only causal attention is supported"));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be positive"));
        }
        match self.arch {
            Architecture::Transformer => {
                if self.head == Head::Linear && !self.mlp_hidden.is_empty() {
                    return Err(Error::invalid("linear head does not take hidden layers"));
                }
                if self.fixed_embedding && self.token_dim() != self.d_model {
                    return Err(Error::invalid("fixed embedding requires token_dim == d_model"));
                }
            }
            Architecture::Mlp => {
                if self.head != Head::Mlp {
                    return Err(Error::invalid("MLP baseline requires the mlp head"));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        io::sha256_bytes(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Location of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Dense affine layer `y = x W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSlot {
    pub w: Slot,
    pub b: Slot,
}

/// Named tensor layout of a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub w_emb: Option<Slot>,
    pub pe: Option<Slot>,
    pub w_q: Option<Slot>,
    pub w_k: Option<Slot>,
    pub w_v: Option<Slot>,
    pub w_o: Option<Slot>,
    pub dense: Vec<DenseSlot>,
    pub names: Vec<(String, Slot)>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut names = Vec::new();
        let mut off = 0usize;
        let mut take = |name: String, rows: usize, cols: usize, names: &mut Vec<(String, Slot)>| {
            let s = Slot {
                offset: off,
                rows,
                cols,
            };
            off += rows * cols;
            names.push((name, s));
            s
        };
        let d = cfg.d_model;
        let mut layout = Layout {
            w_emb: None,
            pe: None,
            w_q: None,
            w_k: None,
            w_v: None,
            w_o: None,
            dense: Vec::new(),
            names: Vec::new(),
            total: 0,
        };
        let head_in = match cfg.arch {
            Architecture::Transformer => {
                if !cfg.fixed_embedding {
                    layout.w_emb = Some(take("W_emb".into(), cfg.token_dim(), d, &mut names));
                }
                if cfg.pos_encoding == PosEncoding::Learned {
                    layout.pe = Some(take("P".into(), cfg.context_len, d, &mut names));
                }
                layout.w_q = Some(take("W_Q".into(), d, d, &mut names));
                layout.w_k = Some(take("W_K".into(), d, d, &mut names));
                layout.w_v = Some(take("W_V".into(), d, d, &mut names));
                d
            }
            Architecture::Mlp => cfg.token_dim(),
        };
        match cfg.head {
            Head::Linear => {
                layout.w_o = Some(take("W_O".into(), d, cfg.input_dim, &mut names));
            }
            Head::Mlp => {
                let mut fan_in = head_in;
                let widths: Vec<usize> = cfg.mlp_hidden.iter().copied().chain([cfg.input_dim]).collect();
                for (i, &w) in widths.iter().enumerate() {
                    let ws = take(format!("W_{}", i + 1), fan_in, w, &mut names);
                    let bs = take(format!("b_{}", i + 1), 1, w, &mut names);
                    layout.dense.push(DenseSlot { w: ws, b: bs });
                    fan_in = w;
                }
            }
        }
        layout.names = names;
        layout.total = off;
        Ok(layout)
    }

    pub fn slot(&self, name: &str) -> Option<Slot> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    /// Whether a slot holds a bias (initialized to zero).
    fn is_bias(name: &str) -> bool {
        name.starts_with("b_")
    }
}

/// Flat parameter vector with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        let layout = Layout::new(cfg)?;
        let values = vec![0.0; layout.total];
        Ok(ModelParams { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, s: Slot) -> &[f64] {
        &self.values[s.range()]
    }

    pub fn get_mut(&mut self, s: Slot) -> &mut [f64] {
        &mut self.values[s.range()]
    }

    /// Copy of a named tensor.
    pub fn tensor(&self, name: &str) -> Option<Mat> {
        self.layout
            .slot(name)
            .map(|s| Mat::from_vec(s.rows, s.cols, self.get(s).to_vec()))
    }

    pub fn set_tensor(&mut self, name: &str, m: &Mat) -> Result<()> {
        let s = self
            .layout
            .slot(name)
            .ok_or_else(|| Error::invalid(format!("no tensor named {name}")))?;
        if m.shape() != (s.rows, s.cols) {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                got: m.data().len(),
            });
        }
        self.get_mut(s).copy_from_slice(m.data());
        Ok(())
    }

    /// Embedding matrix, the identity when the embedding is fixed.
    pub fn embedding(&self, cfg: &ModelConfig) -> Mat {
        match self.layout.w_emb {
            Some(s) => Mat::from_vec(s.rows, s.cols, self.get(s).to_vec()),
            None => Mat::identity(cfg.d_model),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn save(&self, cfg: &ModelConfig, path: &Path) -> Result<()> {
        let tensors = self
            .layout
            .names
            .iter()
            .map(|(n, s)| CheckpointTensor {
                name: n.clone(),
                shape: [s.rows, s.cols],
                values: self.get(*s).to_vec(),
            })
            .collect();
        let ck = Checkpoint {
            config: cfg.clone(),
            fingerprint: cfg.fingerprint(),
            tensors,
        };
        io::write_json(path, &ck)
    }

    /// Load a checkpoint, checking the stored fingerprint and all tensor shapes.
    pub fn load(path: &Path) -> Result<(ModelConfig, ModelParams)> {
        let ck: Checkpoint = io::read_json(path)?;
        if ck.config.fingerprint() != ck.fingerprint {
            return Err(Error::HashMismatch {
                path: path.display().to_string(),
            });
        }
        let mut p = ModelParams::zeros(&ck.config)?;
        if ck.tensors.len() != p.layout.names.len() {
            return Err(Error::invalid("checkpoint tensor list does not match the config"));
        }
        for t in &ck.tensors {
            p.set_tensor(&t.name, &Mat::from_vec(t.shape[0], t.shape[1], t.values.clone()))?;
        }
        Ok((ck.config, p))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    fingerprint: String,
    tensors: Vec<CheckpointTensor>,
}

/// Weights `U(−1/√fan_in, 1/√fan_in)`, biases and positional encodings zero.
pub fn init_params(cfg: &ModelConfig) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names = p.layout.names.clone();
    for (name, s) in names {
        if Layout::is_bias(&name) || name == "P" {
            continue;
        }
        let a = 1.0 / (s.rows as f64).sqrt();
        for v in p.get_mut(s) {
            *v = rng.gen_range(-a..a);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_of_attention_only_scalar_model() {
        let mut cfg = ModelConfig::attention_only(1, 2, 1, PosEncoding::Learned, 0);
        cfg.fixed_embedding = true;
        let l = Layout::new(&cfg).unwrap();
        let names: Vec<&str> = l.names.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["P", "W_Q", "W_K", "W_V", "W_O"]);
        assert_eq!(l.total, 2 + 1 + 1 + 1 + 1);
    }

    #[test]
    fn layout_of_mlp_head_and_baseline() {
        let cfg = ModelConfig::transformer_mlp(2, 5, 2, vec![8], PosEncoding::None, 0);
        let l = Layout::new(&cfg).unwrap();
        assert!(l.pe.is_none());
        assert_eq!(l.dense.len(), 2);
        assert_eq!((l.dense[0].w.rows, l.dense[0].w.cols), (2, 8));
        assert_eq!((l.dense[1].w.rows, l.dense[1].w.cols), (8, 2));
        let b = Layout::new(&ModelConfig::mlp_baseline(1, vec![16, 4], 0)).unwrap();
        assert!(b.w_q.is_none());
        assert_eq!(b.total, 16 + 16 + 64 + 4 + 4 + 1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ModelConfig::attention_only(1, 2, 1, PosEncoding::None, 0);
        c.mlp_hidden = vec![3];
        assert!(c.validate().is_err());
        let mut c = ModelConfig::attention_only(2, 2, 1, PosEncoding::None, 0);
        c.fixed_embedding = true;
        assert!(c.validate().is_err());
        let c = ModelConfig::attention_only(1, 0, 1, PosEncoding::None, 0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_fan_in_scaled() {
        let cfg = ModelConfig::attention_only(4, 3, 64, PosEncoding::Learned, 11);
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(a.values, b.values);
        let wq = a.tensor("W_Q").unwrap();
        let n = wq.data().len() as f64;
        let mean = wq.data().iter().sum::<f64>() / n;
        let sd = (wq.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expect = (3.0 * 64.0f64).powf(-0.5);
        assert!((sd / expect - 1.0).abs() < 0.1, "{sd} vs {expect}");
        assert!(a.tensor("P").unwrap().data().iter().all(|v| *v == 0.0));
        let none = ModelConfig::attention_only(4, 3, 8, PosEncoding::None, 11);
        assert!(init_params(&none).unwrap().tensor("P").is_none());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = ModelConfig::transformer_mlp(1, 4, 3, vec![5], PosEncoding::Learned, 2);
        let p = init_params(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        p.save(&cfg, &path).unwrap();
        let (c2, p2) = ModelParams::load(&path).unwrap();
        assert_eq!(c2, cfg);
        assert_eq!(p2, p);
    }
}
