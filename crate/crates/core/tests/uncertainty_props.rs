use adisep_core::adis::{separate, DepthMap, IntervalPartition};
use adisep_core::tensor::{broadcast_channels, elementwise_mul, Conv2d, FeatureMap};
use adisep_core::uncertainty::{
    apply_uncertainty, apply_weight_map, compute_uncertainty, fuse_features, UncertaintyHead, UncertaintyMap,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, scale: f64) -> FeatureMap {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-scale..scale)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn weights_stay_in_the_open_unit_interval(seed in any::<u64>(), scale in 0.1..1e4f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fused = map(&mut rng, 3, 3, 4, scale);
        let head = UncertaintyHead::random(3, &mut rng).unwrap();
        let u = compute_uncertainty(&fused, &head, (5, 9)).unwrap();
        prop_assert!(u.values().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn larger_logits_lower_the_weight(seed in any::<u64>(), bump in 0.01..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fused = FeatureMap::filled(1, 2, 2, 1.0);
        let mut conv = Conv2d::zeros(1, 1, 1, 1, 1, 0);
        conv.bias_mut()[0] = rng.random_range(-5.0..5.0);
        let low = UncertaintyHead::new(conv.clone()).unwrap().compute(&fused, (2, 2)).unwrap();
        conv.bias_mut()[0] += bump;
        let high = UncertaintyHead::new(conv).unwrap().compute(&fused, (2, 2)).unwrap();
        for (a, b) in low.values().iter().zip(high.values()) {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn weighting_is_linear_in_the_stack(seed in any::<u64>(), alpha in -4.0..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = map(&mut rng, 4, 6, 8, 30.0);
        let u = map(&mut rng, 1, 6, 8, 0.49).map(|v| v + 0.5);
        let conv = Conv2d::random(3, 4, 2, 2, 2, 0, &mut rng).unwrap();
        let mut no_bias = conv.clone();
        no_bias.bias_mut().iter_mut().for_each(|b| *b = 0.0);
        let base = apply_weight_map(&stack, &u, &no_bias).unwrap();
        let scaled = apply_weight_map(&stack.map(|v| alpha * v), &u, &no_bias).unwrap();
        for (a, b) in base.as_slice().iter().zip(scaled.as_slice()) {
            prop_assert!((alpha * a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        // composing the primitives gives the same numbers bit for bit
        let composed = conv.forward(&elementwise_mul(&stack, &broadcast_channels(&u, 4).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(apply_weight_map(&stack, &u, &conv).unwrap(), composed);
    }

    #[test]
    fn fusion_matches_scalar_loops(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, h, w) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..7));
        let [f_i, f_d, f_sd, f_u] = [0; 4].map(|_| map(&mut rng, c, h, w, 10.0));
        let (i_a, i_l) = fuse_features(&f_i, &f_d, &f_sd, &f_u).unwrap();
        for k in 0..c * h * w {
            prop_assert_eq!(i_a.as_slice()[k], f_i.as_slice()[k] + f_d.as_slice()[k]);
            prop_assert_eq!(i_l.as_slice()[k], f_d.as_slice()[k] + f_sd.as_slice()[k] + f_u.as_slice()[k]);
        }
    }
}

#[test]
fn uncertainty_limits_on_a_real_stack() {
    let dep = DepthMap::from_depths(2, 4, vec![1.0, 0.0, 15.0, 33.0, 47.0, 79.0, 0.0, 90.0]).unwrap();
    let stack = separate(&dep, &IntervalPartition::uniform(4, 80.0).unwrap());
    let ones = UncertaintyMap::new(2, 4, vec![1.0 - f64::EPSILON / 2.0; 8]).unwrap();
    let f_sd = apply_uncertainty(&stack, &ones, &Conv2d::identity(4)).unwrap();
    for (a, b) in f_sd.as_slice().iter().zip(stack.to_feature_map().as_slice()) {
        assert!((a - b).abs() <= 1e-13 * b.abs());
    }
    let mismatched = UncertaintyMap::new(2, 3, vec![0.5; 6]).unwrap();
    assert!(apply_uncertainty(&stack, &mismatched, &Conv2d::identity(4)).is_err());
}
