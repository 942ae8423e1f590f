//! Property tests over the public API.

use gnr_core::data::toy::render_tensor;
use gnr_core::data::{apply_augmentation, sample_augmentation, Domain, DomainDataset, Split};
use gnr_core::explore::{edit_style, LatentDirection, StyleTimeline};
use gnr_core::losses::{derangement, shuffle_styles, style_consistency_loss};
use gnr_core::metrics::{frechet_distance, FeatureSet};
use gnr_core::nets::{minibatch_stddev_features, StyleCode};
use gnr_formats::Interpolation;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::Tensor;

fn style() -> impl Strategy<Value = StyleCode> {
    prop::array::uniform8(-5.0f64..5.0).prop_map(StyleCode)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derangements_are_fixed_point_free_permutations(n in 2usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = derangement(n, &mut rng).unwrap();
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(p.iter().enumerate().all(|(i, &j)| i != j));
    }

    #[test]
    fn shuffled_styles_keep_the_multiset(styles in prop::collection::vec(style(), 2..10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = shuffle_styles(&styles, &mut rng).unwrap();
        let key = |v: &[StyleCode]| {
            let mut k: Vec<Vec<u64>> = v.iter().map(|s| s.0.iter().map(|x| x.to_bits()).collect()).collect();
            k.sort();
            k
        };
        prop_assert_eq!(key(&out), key(&styles));
    }

    #[test]
    fn style_variance_is_nonnegative_and_shift_invariant(
        styles in prop::collection::vec(style(), 2..10),
        shift in prop::array::uniform8(-3.0f64..3.0),
    ) {
        let v = style_consistency_loss(&styles).unwrap();
        let moved: Vec<StyleCode> = styles
            .iter()
            .map(|s| StyleCode(std::array::from_fn(|i| s.0[i] + shift[i])))
            .collect();
        prop_assert!(v >= 0.0);
        prop_assert!((style_consistency_loss(&moved).unwrap() - v).abs() <= 1e-9 * (1.0 + v));
    }

    #[test]
    fn batch_stddev_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5), 2..12),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let t = |rs: Vec<f64>| Tensor::from_slice(&rs).view([rows.len() as i64, 5]);
        let a = minibatch_stddev_features(&t(rows.concat())).unwrap();
        let b = minibatch_stddev_features(&t(order.iter().flat_map(|&i| rows[i].clone()).collect())).unwrap();
        prop_assert!(a.equal(&b));
    }

    #[test]
    fn frechet_distance_is_symmetric_and_nonnegative(seed in any::<u64>(), shift in -2.0f64..2.0) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = |n: usize, m: f64| {
            let data = (0..n * 3).map(|_| m + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            FeatureSet::new(n, 3, "p", data).unwrap()
        };
        let (a, b) = (set(40, 0.0), set(60, shift));
        let ab = frechet_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - frechet_distance(&b, &a).unwrap()).abs() <= 1e-9 * (1.0 + ab));
    }

    #[test]
    fn linear_timeline_stays_between_neighbouring_keyframes(
        a in style(), b in style(), gap in 1u64..50, frame in 0u64..80,
    ) {
        let t = StyleTimeline::new(vec![(10, a), (10 + gap, b)], Interpolation::Linear).unwrap();
        let s = t.style_at(frame).unwrap();
        for i in 0..8 {
            let (lo, hi) = (a.0[i].min(b.0[i]), a.0[i].max(b.0[i]));
            prop_assert!(s.0[i] >= lo - 1e-12 && s.0[i] <= hi + 1e-12);
        }
        if frame <= 10 { prop_assert_eq!(s, a); }
        if frame >= 10 + gap { prop_assert_eq!(s, b); }
    }

    #[test]
    fn style_edits_compose_additively(s in style(), v in prop::array::uniform8(-1.0f64..1.0), x in -4.0f64..4.0, y in -4.0f64..4.0) {
        let d = LatentDirection { vector: v, eigenvalue: 1.0, layer_scope: Vec::new() };
        let twice = edit_style(&edit_style(&s, &d, x), &d, y);
        let once = edit_style(&s, &d, x + y);
        for i in 0..8 {
            prop_assert!((twice.0[i] - once.0[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn augmentation_keeps_size_and_range(seed in any::<u64>(), index in 0usize..50) {
        let img = render_tensor(Domain::X, 1, index, 32);
        let p = sample_augmentation(&mut ChaCha8Rng::seed_from_u64(seed), 32);
        let out = apply_augmentation(&img, &p).unwrap();
        prop_assert_eq!(out.size(), 32);
        prop_assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn epoch_orders_are_permutations(seed in any::<u64>(), epoch in 0u64..100, n in 1usize..30) {
        let images = (0..n).map(|i| render_tensor(Domain::Y, 2, i, 8)).collect();
        let ds = DomainDataset::from_images(Domain::Y, Split::Train, images);
        let mut order = ds.epoch_order(seed, epoch);
        prop_assert_eq!(ds.epoch_order(seed, epoch), order.clone());
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }
}
