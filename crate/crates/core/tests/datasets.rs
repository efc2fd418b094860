use attn_dyn::datasets::{delay_windows, make_split, split_counts, zscore, DelayDataset, ObservationOperator, Split};
use attn_dyn::dynamics::{integrate, SdofParams, SystemSpec};
use attn_dyn::Mat;
use proptest::prelude::*;

fn series_strategy() -> impl Strategy<Value = Mat> {
    (2usize..40, 1usize..4)
        .prop_flat_map(|(t, p)| prop::collection::vec(-10.0f64..10.0, t * p).prop_map(move |v| Mat::from_vec(t, p, v)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_are_slices_of_the_series(series in series_strategy(), l in 1usize..8) {
        prop_assume!(series.rows() > l);
        let (w, y) = delay_windows(&series, l).unwrap();
        let p = series.cols();
        prop_assert_eq!(w.rows(), series.rows() - l);
        for i in 0..w.rows() {
            for k in 0..l {
                prop_assert_eq!(&w.row(i)[k * p..(k + 1) * p], series.row(i + k));
            }
            prop_assert_eq!(y.row(i), series.row(i + l));
            if i + 1 < w.rows() {
                prop_assert_eq!(&w.row(i + 1)[..(l - 1) * p], &w.row(i)[p..]);
                prop_assert_eq!(&w.row(i + 1)[(l - 1) * p..], y.row(i));
            }
        }
    }

    #[test]
    fn splits_are_deterministic_and_exhaustive(n in 3usize..200, seed in 0u64..10_000) {
        let ratios = (0.6, 0.2, 0.2);
        let a = make_split(n, ratios, seed);
        let b = make_split(n, ratios, seed);
        prop_assert_eq!(a.as_ref().ok(), b.as_ref().ok());
        // a ratio can round to an empty split for tiny n; that is reported, not hidden
        if let Ok(assign) = a {
            let c = split_counts(&assign);
            prop_assert_eq!(c.unused, 0);
            prop_assert_eq!(c.train + c.val + c.test, n);
            prop_assert_eq!(c.train, (0.6 * n as f64).round() as usize);
        }
    }

    #[test]
    fn partial_ratios_leave_the_rest_unused(n in 10usize..200, seed in 0u64..10_000) {
        let assign = make_split(n, (0.5, 0.1, 0.0), seed).unwrap();
        let c = split_counts(&assign);
        prop_assert_eq!(c.test, 0);
        prop_assert_eq!(c.train + c.val + c.unused, n);
    }

    #[test]
    fn zscored_columns_have_zero_mean_and_unit_variance(series in series_strategy()) {
        prop_assume!(series.rows() >= 3);
        let (z, _, _) = zscore(&series);
        for j in 0..series.cols() {
            let col = series.col(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let spread = col.iter().fold(0.0f64, |a, v| a.max((v - mean).abs()));
            prop_assume!(spread > 1e-6);
            let zc = z.col(j);
            let zm = zc.iter().sum::<f64>() / zc.len() as f64;
            let zv = zc.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / zc.len() as f64;
            prop_assert!(zm.abs() < 1e-10);
            prop_assert!((zv - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn integrated_windows_never_cross_trajectories(
        lens in prop::collection::vec(20usize..60, 2..5),
        l in 1usize..10,
        seed in 0u64..100,
    ) {
        let spec = SystemSpec::Sdof(SdofParams::new(1.0, 0.5, 2000.0).unwrap());
        let trajs: Vec<_> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| integrate(&spec, &[0.01 * (i + 1) as f64, 0.0], (0.0, (n - 1) as f64 * 0.04), 0.04, 1e-8, 1e-12).unwrap())
            .collect();
        let assign = make_split(trajs.len(), (0.5, 0.5, 0.0), seed).unwrap();
        let ds = DelayDataset::from_trajectories(&trajs, &ObservationOperator::Component(0), l, &assign, false).unwrap();
        let expected: usize = ds.series.iter().map(|s| s.values.rows() - l).sum();
        prop_assert_eq!(ds.len(), expected);
        for i in 0..ds.len() {
            let o = ds.origin(i);
            let s = &ds.series[o.series];
            prop_assert!(o.offset + l < s.values.rows());
            prop_assert_eq!(ds.window(i), &s.values.data()[o.offset..o.offset + l]);
            prop_assert_eq!(ds.target(i), s.values.row(o.offset + l));
            prop_assert_eq!(ds.split_of(i), s.split);
        }
        let train = ds.indices(Split::Train).len();
        let val = ds.indices(Split::Val).len();
        prop_assert_eq!(train + val, ds.len());
    }
}

#[test]
fn takens_margin_tracks_the_window_length() {
    let spec = SystemSpec::Sdof(SdofParams::new(1.0, 0.5, 2000.0).unwrap());
    let traj = integrate(&spec, &[0.01, 0.0], (0.0, 2.0), 0.04, 1e-8, 1e-12).unwrap();
    for (l, margin) in [(4, -1), (5, 0), (8, 3)] {
        let ds = DelayDataset::from_trajectories(
            std::slice::from_ref(&traj),
            &ObservationOperator::Component(0),
            l,
            &[Some(Split::Train)],
            false,
        )
        .unwrap()
        .with_intrinsic_dim(2);
        assert_eq!(ds.meta.takens_margin(), Some(margin));
    }
}
