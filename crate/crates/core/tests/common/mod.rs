#![allow(dead_code, clippy::needless_range_loop)]

use attn_dyn::datasets::WindowSet;
use attn_dyn::model::{init_params, loss_and_grad, Activation, ModelConfig, ModelParams, PosEncoding, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every parameter drawn from `U(−1, 1)`, including biases and positional encodings.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in p.values.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    p
}

pub fn random_window(cfg: &ModelConfig, rng: &mut impl Rng) -> Vec<f64> {
    (0..cfg.context_len * cfg.token_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect()
}

pub fn random_windows(cfg: &ModelConfig, n: usize, seed: u64) -> WindowSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = cfg.context_len * cfg.token_dim();
    let inputs = (0..n * per).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let targets = (0..n * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    WindowSet::new(cfg.context_len, cfg.token_dim(), cfg.input_dim, inputs, targets).unwrap()
}

/// A transformer configuration drawn from the supported space.
pub fn random_config(seed: u64) -> ModelConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.gen_range(1..=2);
    let l = rng.gen_range(1..=6);
    let d = rng.gen_range(1..=3);
    let pos = if rng.gen_bool(0.5) {
        PosEncoding::Learned
    } else {
        PosEncoding::None
    };
    let mut cfg = match rng.gen_range(0..3) {
        0 => ModelConfig::attention_only(input_dim, l, d, pos, seed),
        1 => {
            let hidden = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=6)).collect();
            ModelConfig::transformer_mlp(input_dim, l, d, hidden, pos, seed)
        }
        _ => ModelConfig::mlp_baseline(input_dim, vec![rng.gen_range(2..=6)], seed),
    };
    if !cfg.mlp_hidden.is_empty() && rng.gen_bool(0.3) {
        cfg.activation = Activation::Relu;
    }
    if rng.gen_bool(0.3) {
        cfg.cond_dim = 1;
    }
    cfg
}

/// Worst relative disagreement between the analytic gradient and central differences.
pub fn gradient_error(cfg: &ModelConfig, seed: u64) -> f64 {
    let p = random_params(cfg, seed);
    let data = random_windows(cfg, 4, seed.wrapping_add(100));
    let idx: Vec<usize> = (0..4).collect();
    let mut ws = Workspace::new(cfg, &p);
    let mut g = vec![0.0; p.len()];
    loss_and_grad(&p, cfg, &data, &idx, &mut g, &mut ws).unwrap();
    let h = 1e-5;
    let mut scratch = vec![0.0; p.len()];
    let mut worst: f64 = 0.0;
    for k in 0..p.len() {
        let mut pp = p.clone();
        pp.values[k] += h;
        let lp = loss_and_grad(&pp, cfg, &data, &idx, &mut scratch, &mut ws).unwrap();
        pp.values[k] -= 2.0 * h;
        let lm = loss_and_grad(&pp, cfg, &data, &idx, &mut scratch, &mut ws).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
