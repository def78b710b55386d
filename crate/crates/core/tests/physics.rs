mod common;

use chimney::sim::{ClimbEnv, Done};
use common::{free_flight_drift, mixed_run, passive_energy_worst_gain, quiet_config, seeded_trace};

#[test]
fn seeded_trajectories_are_bit_identical() {
    let a = seeded_trace(300);
    assert_eq!(a, seeded_trace(300));
}

#[test]
fn free_flight_conserves_horizontal_momentum() {
    let (px, vz) = free_flight_drift();
    assert!(px < 1e-9, "px drift {px:e}");
    assert!(vz < 1e-9, "vz drift {vz:e}");
}

#[test]
fn passive_energy_never_increases() {
    let gain = passive_energy_worst_gain();
    assert!(gain <= 1e-6, "energy gain {gain:e} J");
}

#[test]
fn zero_action_keeps_standing() {
    let mut cfg = quiet_config();
    cfg.randomize.enabled = false;
    // flat floor under both feet
    cfg.fixed_r = Some(0.0);
    let mut env = ClimbEnv::new(cfg, 0).unwrap();
    env.reset(0).unwrap();
    for _ in 0..50 {
        let out = env.step(&[0.0; 5]).unwrap();
        assert_eq!(out.done, Done::Running);
    }
    let v = env.base_velocity();
    assert!(v.norm() < 0.1, "{v:?}");
}

#[test]
fn mixed_run_respects_penetration_and_torque_limits() {
    let run = mixed_run();
    assert_eq!(run.clamp_violations, 0);
    assert!(run.max_penetration < 0.005, "penetration {}", run.max_penetration);
    assert!(run.max_torque_ratio <= 1.0, "torque ratio {}", run.max_torque_ratio);
}
