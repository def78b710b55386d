mod common;

use chimney::terrain::{curriculum_params, junction_x, make_terrain, CgclConfig, Side, TerrainSpec};
use common::{boundary_samples, brute_force};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(w: f64, r: f64) -> TerrainSpec {
    TerrainSpec {
        wall_width: w,
        junction_r: r,
        ..TerrainSpec::default()
    }
}

#[test]
fn junction_is_a_quarter_ellipse() {
    for r in [0.05, 0.15, 0.3] {
        for w in [0.8, 1.0, 1.1] {
            let s = spec(w, r);
            for k in 0..=10_000 {
                let z = f64::from(k) * 1e-4;
                for side in [Side::Left, Side::Right] {
                    let x = junction_x(z, &s, side);
                    let lhs = ((x.abs() - (w / 2.0 - r)) / r).powi(2) + (z - 1.0).powi(2);
                    assert!((lhs - 1.0).abs() < 1e-9, "r={r} w={w} z={z}: {lhs}");
                }
            }
        }
    }
}

#[test]
fn zero_radius_gives_vertical_walls() {
    let s = spec(0.9, 0.0);
    let profile = make_terrain(&s).unwrap();
    for k in 0..=4000 {
        let z = f64::from(k) * 1e-3;
        assert_eq!(junction_x(z, &s, Side::Left), -0.45);
        assert_eq!(junction_x(z, &s, Side::Right), 0.45);
        assert_eq!(profile.wall_x(z, Side::Right), 0.45);
        assert_eq!(profile.wall_x(z, Side::Left), -0.45);
    }
}


#[test]
fn signed_distance_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (w, r) in [(1.0, 0.3), (0.9, 0.15), (0.8, 0.0)] {
        let s = spec(w, r);
        let profile = make_terrain(&s).unwrap();
        let samples = boundary_samples(&s);
        let (x0, x1) = profile.x_bounds();
        for _ in 0..1000 / 3 + 1 {
            let x = rng.random_range(x0..x1);
            let z = rng.random_range(-0.5..s.wall_height);
            let hit = profile.surface_query(x, z).unwrap();
            let want = brute_force(&s, &samples, x, z);
            assert!(
                (hit.distance - want).abs() <= s.resolution,
                "w={w} r={r} ({x:.4}, {z:.4}): {} vs {want}",
                hit.distance
            );
            assert!((hit.normal.norm() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn gap_centre_distance() {
    let profile = make_terrain(&spec(1.0, 0.3)).unwrap();
    let hit = profile.surface_query(0.0, 2.0).unwrap();
    assert!((hit.distance - 0.5).abs() < 1e-9);
    assert!((hit.normal.x.abs() - 1.0).abs() < 1e-9);
}

#[test]
fn curriculum_endpoints() {
    let cfg = CgclConfig::default();
    let l0 = curriculum_params(0, &cfg);
    assert_eq!((l0.r_of_level, l0.roughness_of_level), (0.3, 0.0));
    let ll = curriculum_params(cfg.levels, &cfg);
    assert_eq!(ll.r_of_level, 0.0);
    assert_eq!(ll.roughness_of_level, cfg.roughness_max);
    assert!((curriculum_params(cfg.levels / 2, &cfg).r_of_level - 0.15).abs() < 1e-15);
}

proptest! {
    #[test]
    fn walls_mirror(z in 0.0f64..4.0, r in 0.0f64..0.4, w in 0.8f64..1.2) {
        let s = spec(w, r);
        prop_assert_eq!(junction_x(z, &s, Side::Left), -junction_x(z, &s, Side::Right));
    }

    #[test]
    fn junction_is_continuous(z in 0.0f64..3.99, r in 0.0f64..0.4) {
        let s = spec(1.0, r);
        let a = junction_x(z, &s, Side::Right);
        let b = junction_x(z + 1e-9, &s, Side::Right);
        // sqrt profile at the floor has unbounded slope; 1e-9 rise moves x at most r * sqrt(2e-9)
        prop_assert!((a - b).abs() <= r * 1e-4 + 1e-12);
    }

    #[test]
    fn curriculum_is_monotone(level in 0u32..10) {
        let cfg = CgclConfig::default();
        let a = curriculum_params(level, &cfg);
        let b = curriculum_params(level + 1, &cfg);
        prop_assert!(b.r_of_level < a.r_of_level);
        prop_assert!(b.roughness_of_level >= a.roughness_of_level);
    }

    #[test]
    fn profiles_are_deterministic(seed in any::<u64>()) {
        let s = TerrainSpec { roughness_amp: 0.02, seed, ..spec(1.0, 0.1) };
        let a = make_terrain(&s).unwrap();
        let b = make_terrain(&s).unwrap();
        prop_assert_eq!(a, b);
    }
}
