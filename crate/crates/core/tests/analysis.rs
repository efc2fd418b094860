use std::f64::consts::TAU;

use attn_dyn::analysis::{
    attention_entropy, closure_check, cycle_separation, effective_dimension, mode_predictability, tv_from_uniform,
};
use attn_dyn::Mat;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random orthogonal matrix by Gram–Schmidt.
fn orthogonal(d: usize, rng: &mut impl Rng) -> Mat {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Mat::from_rows(&basis)
}

fn transform(points: &Mat, rot: &Mat, scale: f64, shift: &[f64]) -> Mat {
    let mut out = points.matmul(&rot.transpose()).scale(scale);
    for i in 0..out.rows() {
        for (v, s) in out.row_mut(i).iter_mut().zip(shift) {
            *v += s;
        }
    }
    out
}

/// Points spread along `spread.len()` axes with the given standard deviations.
fn anisotropic_cloud(n: usize, spread: &[f64], rng: &mut impl Rng) -> Mat {
    Mat::from_rows(
        &(0..n)
            .map(|_| spread.iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect())
            .collect::<Vec<_>>(),
    )
}

fn noisy_circle(r: f64, n: usize, noise: f64, lift: f64, rng: &mut impl Rng) -> Mat {
    Mat::from_rows(
        &(0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                vec![
                    r * t.cos() + noise * rng.gen_range(-1.0..1.0),
                    r * t.sin() + noise * rng.gen_range(-1.0..1.0),
                    lift + noise * rng.gen_range(-1.0..1.0),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dimension_ignores_rigid_motion_and_scale(
        d in 2usize..6,
        k in 1usize..6,
        seed in 0u64..10_000,
        scale in 0.01f64..100.0,
    ) {
        let k = k.min(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread: Vec<f64> = (0..d).map(|i| if i < k { 1.0 + i as f64 } else { 1e-4 }).collect();
        let pts = anisotropic_cloud(40 * d, &spread, &mut rng);
        let rot = orthogonal(d, &mut rng);
        let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let moved = transform(&pts, &rot, scale, &shift);
        let a = effective_dimension(&pts, 0.05).unwrap();
        let b = effective_dimension(&moved, 0.05).unwrap();
        prop_assert_eq!(a.dimension, k);
        prop_assert_eq!(b.dimension, k);
        for (x, y) in a.ratios.iter().zip(&b.ratios) {
            prop_assert!((x - y).abs() < 1e-8, "{:?} vs {:?}", a.ratios, b.ratios);
        }
    }

    #[test]
    fn cycle_separation_ignores_similarity_transforms(
        seed in 0u64..10_000,
        scale in 0.01f64..100.0,
        gap in 0.2f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = vec![
            noisy_circle(1.0, 120, 0.03, 0.0, &mut rng),
            noisy_circle(1.0 + gap, 120, 0.03, 0.3, &mut rng),
        ];
        let rot = orthogonal(3, &mut rng);
        let shift: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let moved: Vec<Mat> = groups.iter().map(|g| transform(g, &rot, scale, &shift)).collect();
        let a = cycle_separation(&groups).unwrap();
        let b = cycle_separation(&moved).unwrap();
        prop_assert!((a.score - b.score).abs() < 1e-6 * a.score.max(1.0), "{} vs {}", a.score, b.score);
        prop_assert!((a.min_distance * scale - b.min_distance).abs() < 1e-6 * b.min_distance.max(1e-9));
    }

    #[test]
    fn attention_statistics_are_bounded(weights in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 1e-6);
        let alpha: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let h = attention_entropy(&alpha);
        let n = alpha.len() as f64;
        prop_assert!(h >= -1e-12 && h <= n.ln() + 1e-12);
        let tv = tv_from_uniform(&alpha);
        prop_assert!((-1e-12..=1.0 - 1.0 / n + 1e-12).contains(&tv));
    }
}

#[test]
fn separated_orbits_score_higher_than_overlapping_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let apart = cycle_separation(&[
        noisy_circle(1.0, 200, 0.02, 0.0, &mut rng),
        noisy_circle(1.5, 200, 0.02, 0.0, &mut rng),
    ])
    .unwrap();
    let same = cycle_separation(&[
        noisy_circle(1.0, 200, 0.02, 0.0, &mut rng),
        noisy_circle(1.0, 200, 0.02, 0.0, &mut rng),
    ])
    .unwrap();
    assert!(apart.score > 10.0, "{}", apart.score);
    assert!(same.score < 1.0, "{}", same.score);
}

#[test]
fn phase_of_a_circle_predicts_a_harmonic_far_above_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 400;
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
    let latents = Mat::from_rows(&theta.iter().map(|t| vec![t.cos(), t.sin()]).collect::<Vec<_>>());
    let target: Vec<f64> = theta.iter().map(|t| (2.0 * t).sin()).collect();
    let r2 = mode_predictability(&latents, &target, 0).unwrap();
    let mut shuffled = target.clone();
    shuffled.shuffle(&mut rng);
    let null = mode_predictability(&latents, &shuffled, 0).unwrap();
    assert!(r2 > 0.95, "{r2}");
    assert!(r2 - null >= 0.5, "{r2} vs null {null}");
}

#[test]
fn periodic_orbit_closes_and_a_spiral_does_not() {
    let period = 50;
    let circle = Mat::from_rows(
        &(0..3 * period)
            .map(|k| {
                let t = TAU * k as f64 / period as f64;
                vec![t.cos(), t.sin()]
            })
            .collect::<Vec<_>>(),
    );
    assert!(closure_check(&circle, period).unwrap().closed);
    let spiral = Mat::from_rows(
        &(0..3 * period)
            .map(|k| {
                let t = TAU * k as f64 / period as f64;
                let r = 1.0 + 0.5 * k as f64 / period as f64;
                vec![r * t.cos(), r * t.sin()]
            })
            .collect::<Vec<_>>(),
    );
    assert!(!closure_check(&spiral, period).unwrap().closed);
}
