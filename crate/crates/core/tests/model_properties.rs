mod common;

use attn_dyn::analysis::extract_effective_ar;
use attn_dyn::model::{causal_softmax, forward, predict, ModelConfig, PosEncoding};
use attn_dyn::Mat;
use common::{gradient_error, random_config, random_params, random_window};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn transformer_config(seed: u64) -> ModelConfig {
    let mut s = seed;
    loop {
        let cfg = random_config(s);
        if cfg.arch == attn_dyn::model::Architecture::Transformer {
            return cfg;
        }
        s = s.wrapping_add(7919);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradients_agree_with_central_differences(seed in 0u64..1_000_000) {
        let cfg = random_config(seed);
        let e = gradient_error(&cfg, seed);
        prop_assert!(e < 1e-5, "{cfg:?}: relative error {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_are_probability_vectors(seed in 0u64..1_000_000) {
        let cfg = transformer_config(seed);
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_window(&cfg, &mut rng);
        let a = forward(&p, &cfg, &w).unwrap().a;
        for i in 0..a.rows() {
            let row = a.row(i);
            let sum: f64 = row[..=i].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(row[..=i].iter().all(|&v| v >= 0.0));
            prop_assert!(row[i + 1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn later_tokens_never_change_earlier_contexts(seed in 0u64..1_000_000, bump in -5.0f64..5.0) {
        let cfg = transformer_config(seed);
        prop_assume!(cfg.context_len >= 2);
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_window(&cfg, &mut rng);
        let base = forward(&p, &cfg, &w).unwrap();
        let td = cfg.token_dim();
        let j = cfg.context_len - 1 - (seed as usize % (cfg.context_len - 1));
        let mut w2 = w.clone();
        for v in &mut w2[j * td..(j + 1) * td] {
            *v += bump;
        }
        let pert = forward(&p, &cfg, &w2).unwrap();
        for i in 0..j {
            prop_assert_eq!(base.z.row(i), pert.z.row(i));
            prop_assert_eq!(base.a.row(i), pert.a.row(i));
        }
    }

    #[test]
    fn value_scaling_scales_linear_head_predictions(seed in 0u64..1_000_000, s in 0.01f64..10.0) {
        let mut cfg = transformer_config(seed);
        cfg.head = attn_dyn::model::Head::Linear;
        cfg.mlp_hidden.clear();
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_window(&cfg, &mut rng);
        let y = predict(&p, &cfg, &w).unwrap();
        let mut q = p.clone();
        let wv = q.tensor("W_V").unwrap().scale(s);
        q.set_tensor("W_V", &wv).unwrap();
        let ys = predict(&q, &cfg, &w).unwrap();
        for (a, b) in y.iter().zip(&ys) {
            prop_assert!((a * s - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn softmax_ignores_row_shifts(seed in 0u64..1_000_000, shift in -50.0f64..50.0) {
        let cfg = transformer_config(seed);
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_window(&cfg, &mut rng);
        let t = forward(&p, &cfg, &w).unwrap();
        let logits = t.q.matmul(&t.k.transpose()).scale(1.0 / (cfg.d_model as f64).sqrt());
        let a = causal_softmax(&logits);
        for (x, y) in a.data().iter().zip(t.a.data()) {
            prop_assert!((x - y).abs() < 1e-15);
        }
        let row = seed as usize % logits.rows();
        let mut shifted = logits.clone();
        for v in shifted.row_mut(row) {
            *v += shift;
        }
        let b = causal_softmax(&shifted);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn without_positions_attention_depends_on_values_not_slots(seed in 0u64..1_000_000) {
        let mut cfg = transformer_config(seed);
        cfg.pos_encoding = PosEncoding::None;
        prop_assume!(cfg.context_len >= 3);
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let td = cfg.token_dim();
        let l = cfg.context_len;
        let w = random_window(&cfg, &mut rng);
        let (i, j) = (0, l - 2);
        let mut sw = w.clone();
        for c in 0..td {
            sw.swap(i * td + c, j * td + c);
        }
        let a = forward(&p, &cfg, &w).unwrap();
        let b = forward(&p, &cfg, &sw).unwrap();
        let (ra, rb) = (a.a.row(l - 1), b.a.row(l - 1));
        prop_assert!((ra[i] - rb[j]).abs() < 1e-14 && (ra[j] - rb[i]).abs() < 1e-14);
        for (x, y) in a.prediction.iter().zip(&b.prediction) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn effective_ar_reproduces_attention_only_predictions(seed in 0u64..1_000_000, amp in 0.01f64..10.0) {
        let mut cfg = transformer_config(seed);
        cfg.head = attn_dyn::model::Head::Linear;
        cfg.mlp_hidden.clear();
        let p = random_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = random_window(&cfg, &mut rng).into_iter().map(|v| v * amp).collect();
        let t = forward(&p, &cfg, &w).unwrap();
        let ar = extract_effective_ar(&t, &w, &p, &cfg).unwrap();
        prop_assert!(ar.residual < 1e-10 * (1.0 + t.prediction.iter().fold(0.0f64, |a, v| a.max(v.abs()))));
        let sum: f64 = ar.alphas.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12 && ar.alphas.iter().all(|&a| a >= 0.0));
        prop_assert!(ar.betas_share_sign_of_m());
        let td = cfg.token_dim();
        let mut recon = ar.pe_constant.clone();
        for (i, b) in ar.betas.iter().enumerate() {
            let y = Mat::from_vec(1, td, w[i * td..(i + 1) * td].to_vec()).matmul(b);
            for (r, v) in recon.iter_mut().zip(y.row(0)) {
                *r += v;
            }
        }
        for (r, y) in recon.iter().zip(&t.prediction) {
            prop_assert!((r - y).abs() < 1e-10 * (1.0 + y.abs()));
        }
    }
}
