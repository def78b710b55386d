mod common;

use chimney::rewards::{compute_rewards, f_kernel, tracking_score, weighted_total, RewardConfig, TERM_NAMES};
use common::{oracle, random_inputs, WEIGHTS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;


#[test]
fn matches_straight_line_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = RewardConfig::default();
    assert_eq!(cfg.weights, WEIGHTS);
    for _ in 0..100 {
        let inputs = random_inputs(&mut rng);
        let got = compute_rewards(&inputs, &cfg).unwrap();
        let want = oracle(&inputs);
        for (k, (g, w)) in got.terms().iter().zip(&want).enumerate() {
            assert!((g - w).abs() <= 1e-9, "{}: {g} vs {w}", TERM_NAMES[k]);
        }
        let mut total = 0.0;
        for k in 0..16 {
            total += WEIGHTS[k] * want[k];
        }
        assert!((got.weighted_total - total).abs() <= 1e-9 * total.abs().max(1.0));
    }
}

#[test]
fn kernel_values() {
    assert_eq!(f_kernel(0.0, 0.01), 1.0);
    let want = (-1.0f64).exp() - 0.006;
    assert!((f_kernel(0.1, 0.01) - want).abs() < 1e-15);
    assert!((f_kernel(0.1, 0.01) - 0.36188).abs() < 1e-5);
    let score = tracking_score(&[(0.5, 0.0, 0.5 - 0.1f64.sqrt()); 7]).unwrap();
    assert!((score - want).abs() < 1e-12);
}

#[test]
fn kernel_peak_at_zero() {
    for k in -2000..=2000 {
        let x = f64::from(k) * 1e-3;
        assert!(f_kernel(x, 0.01) <= 1.0);
        if k != 0 {
            assert!(f_kernel(x, 0.01) < 1.0);
        }
    }
}

#[test]
fn termination_threshold_is_strict() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut i = random_inputs(&mut rng);
    let cfg = RewardConfig::default();
    i.gravity = [0.0, 0.0, 0.2];
    assert_eq!(compute_rewards(&i, &cfg).unwrap().termination, 0.0);
    i.gravity[2] = 0.2 + 1e-12;
    assert_eq!(compute_rewards(&i, &cfg).unwrap().termination, 1.0);
    i.gravity[2] = 0.25;
    assert_eq!(compute_rewards(&i, &cfg).unwrap().termination, 1.0);
}

#[test]
fn base_height_pivot() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut i = random_inputs(&mut rng);
    i.base_pos[2] = 0.6;
    assert_eq!(compute_rewards(&i, &RewardConfig::default()).unwrap().base_height, 0.0);
}

proptest! {
    #[test]
    fn doubling_weights_doubles_total(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i = random_inputs(&mut rng);
        let b = compute_rewards(&i, &RewardConfig::default()).unwrap();
        let doubled: Vec<f64> = WEIGHTS.iter().map(|w| 2.0 * w).collect();
        let t2 = weighted_total(&b.terms(), &doubled.try_into().unwrap());
        prop_assert_eq!(t2, 2.0 * b.weighted_total);
    }

    #[test]
    fn residuals_nonnegative_indicators_binary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = compute_rewards(&random_inputs(&mut rng), &RewardConfig::default()).unwrap();
        prop_assert!(b.dof_pos_limits >= 0.0 && b.dof_vel_limits >= 0.0 && b.torque_limits >= 0.0);
        for v in [b.climb_high, b.termination] {
            prop_assert!(v == 0.0 || v == 1.0);
        }
    }

    #[test]
    fn score_permutation_invariant(mut steps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.0f64..0.6), 1..40)) {
        let a = tracking_score(&steps).unwrap();
        steps.reverse();
        let b = tracking_score(&steps).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
