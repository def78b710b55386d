#![allow(dead_code)]
//! Independent reference implementations shared by the integration tests.

use chimney::kinematics::{fk_foot, LegAngles, LegChain};
use chimney::nalgebra::{Vector2, Vector3};
use chimney::rewards::RewardInputs;
use chimney::sim::{ClimbEnv, EnvConfig, PhysicsFlags};
use chimney::terrain::{junction_x, Side, TerrainSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;

// tau_i = -f . dp/dtheta_i by central differences of the forward kinematics.
pub fn virtual_work(chain: &LegChain, a: LegAngles, f: Vector3<f64>) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut plus = a;
        let mut minus = a;
        match i {
            0 => {
                plus.collar += H;
                minus.collar -= H;
            }
            1 => {
                plus.hip += H;
                minus.hip -= H;
            }
            _ => {
                plus.knee += H;
                minus.knee -= H;
            }
        }
        let dp = (fk_foot(chain, plus) - fk_foot(chain, minus)) / (2.0 * H);
        *o = -f.dot(&dp);
    }
    out
}

pub fn rel_err(got: [f64; 3], want: [f64; 3]) -> f64 {
    let diff: f64 = got.iter().zip(&want).map(|(g, w)| (g - w).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

pub const WEIGHTS: [f64; 16] = [
    3.0, -1.0, 5.0, -500.0, -10.0, -3e-2, -1e-6, -3e-4, -10.0, -0.1, -1e-3, -0.1, -1.0, -1.0, 0.05, 0.4,
];

// Straight-line evaluator, one expression per row, indexed loops only.
pub fn oracle(i: &RewardInputs) -> [f64; 16] {
    let x = (i.base_vel[2] - i.v_ref) * (i.base_vel[2] - i.v_ref) + i.base_vel[0] * i.base_vel[0];
    let tracking = (-(x * x) / 0.01).exp() - 0.6 * x * x;

    let mut collision = 0.0;
    for k in 0..i.penalized_contact_forces.len() {
        if i.penalized_contact_forces[k].abs() > 0.1 {
            collision += 1.0;
        }
    }
    let climb = if i.base_pos[2] > 3.0 { 1.0 } else { 0.0 };
    let term = if i.gravity[2] > 0.2 { 1.0 } else { 0.0 };
    let orient = i.gravity[0] * i.gravity[0] + i.gravity[1] * i.gravity[1];

    let n = i.torques.len();
    let mut rated = 0.0;
    let mut acc = 0.0;
    let mut vel = 0.0;
    let mut pos_lim = 0.0;
    let mut vel_lim = 0.0;
    let mut tau_lim = 0.0;
    for j in 0..n {
        rated += (i.torques[j] / i.rated_torques[j]).abs();
        acc += i.joint_acc[j] * i.joint_acc[j];
        vel += i.joint_vel[j] * i.joint_vel[j];

        let lo = 0.8 * i.pos_min[j];
        let hi = 0.8 * i.pos_max[j];
        let q = i.joint_pos[j];
        let c = if q < lo { lo } else if q > hi { hi } else { q };
        pos_lim += (q - c).abs();

        let lo = 0.6 * i.vel_min[j];
        let hi = 0.6 * i.vel_max[j];
        let v = i.joint_vel[j];
        let c = if v < lo { lo } else if v > hi { hi } else { v };
        vel_lim += (v - c).abs();

        let lo = -0.8 * i.torque_max[j];
        let hi = 0.8 * i.torque_max[j];
        let t = i.torques[j];
        let c = if t < lo { lo } else if t > hi { hi } else { t };
        tau_lim += (t - c).abs();
    }
    let center = i.base_pos[1] * i.base_pos[1];
    let yaw = i.yaw * i.yaw;
    let mut collar = 0.0;
    for k in 0..i.collar_angles.len() {
        collar += i.collar_angles[k].abs() * i.collar_angles[k].abs();
    }
    let mut low = 0.0;
    for k in 0..i.foot_heights.len() {
        let z = if i.foot_heights[k] < 0.01 { 0.01 } else { i.foot_heights[k] };
        low += (z / 0.2).ln();
    }
    let d = i.base_pos[2] - 0.6;
    let base = d + 9.0 * if d < 0.0 { d } else { 0.0 };

    [
        tracking, collision, climb, term, orient, rated, acc, vel, pos_lim, vel_lim, tau_lim, center, yaw, collar, low, base,
    ]
}

pub fn random_inputs(rng: &mut ChaCha8Rng) -> RewardInputs {
    let n = 5;
    let mut v = |lo: f64, hi: f64, k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(lo..hi)).collect() };
    let pos_min = v(-2.0, -0.5, n);
    let pos_max = v(0.5, 2.0, n);
    let vel_max = v(5.0, 20.0, n);
    let vel_min: Vec<f64> = vel_max.iter().map(|x| -x).collect();
    let torque_max = v(20.0, 50.0, n);
    let rated = v(5.0, 15.0, n);
    let torques = v(-60.0, 60.0, n);
    let joint_pos = v(-2.0, 2.0, n);
    let joint_vel = v(-20.0, 20.0, n);
    let joint_acc = v(-500.0, 500.0, n);
    let forces = v(0.0, 0.3, 6);
    let feet = v(-0.05, 1.5, 4);
    let collar = v(-0.3, 0.3, 4);
    let g = v(-1.0, 1.0, 3);
    let base_pos = v(-0.5, 3.5, 3);
    let base_vel = v(-1.0, 1.0, 3);
    let scal = v(-0.5, 0.8, 2);
    RewardInputs {
        base_vel: [base_vel[0], base_vel[1], base_vel[2]],
        v_ref: scal[0].abs(),
        penalized_contact_forces: forces,
        base_pos: [base_pos[0], base_pos[1], base_pos[2]],
        gravity: [g[0], g[1], g[2]],
        yaw: scal[1],
        torques,
        rated_torques: rated,
        torque_max,
        joint_pos,
        joint_vel,
        joint_acc,
        pos_min,
        pos_max,
        vel_min,
        vel_max,
        collar_angles: collar,
        foot_heights: feet,
    }
}

// Dense polyline of the smooth right half of the cross-section, mirrored.
pub fn boundary_samples(s: &TerrainSpec) -> Vec<(f64, f64)> {
    let half = s.wall_width / 2.0;
    let fh = half - s.junction_r;
    let mut pts = Vec::new();
    let mut push = |x: f64, z: f64| {
        pts.push((x, z));
        pts.push((-x, z));
    };
    let n = 20_000;
    for i in 0..=n {
        push(fh * f64::from(i) / f64::from(n), 0.0);
    }
    // ellipse centre (fh, 1), horizontal radius r, vertical radius 1
    for i in 0..=n {
        let t = std::f64::consts::FRAC_PI_2 * f64::from(i) / f64::from(n);
        push(fh + s.junction_r * t.sin(), 1.0 - t.cos());
    }
    for i in 0..=n {
        push(half, 1.0 + 6.0 * f64::from(i) / f64::from(n));
    }
    pts
}

pub fn brute_force(s: &TerrainSpec, samples: &[(f64, f64)], x: f64, z: f64) -> f64 {
    let d = samples
        .iter()
        .map(|(px, pz)| (px - x).hypot(pz - z))
        .fold(f64::INFINITY, f64::min);
    let free = z > 0.0 && x.abs() < junction_x(z, s, Side::Right);
    if free {
        d
    } else {
        -d
    }
}

pub fn quiet_config() -> EnvConfig {
    let mut cfg = EnvConfig::default();
    cfg.perturb.enabled = false;
    cfg
}

pub fn random_action(rng: &mut ChaCha8Rng) -> [f64; 5] {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

/// Bit patterns of state and reward over `steps` random-action steps.
pub fn seeded_trace(steps: usize) -> Vec<u64> {
    let mut env = ClimbEnv::new(EnvConfig::default(), 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut trace = Vec::new();
    for _ in 0..steps {
        let out = env.step(&random_action(&mut rng)).unwrap();
        trace.extend(env.q().iter().chain(&env.qdot()).map(|v| v.to_bits()));
        trace.push(out.reward.weighted_total.to_bits());
        if out.done.is_terminal() {
            env.reset(3).unwrap();
        }
    }
    trace
}

/// Worst drift of horizontal momentum and of vz against ballistic flight
/// over 1 s with contacts off.
pub fn free_flight_drift() -> (f64, f64) {
    let mut env = ClimbEnv::new(quiet_config(), 1).unwrap();
    env.set_flags(PhysicsFlags {
        contacts: false,
        joint_limits: false,
        energy_projection: false,
    });
    env.set_configuration(Vector2::new(0.0, 2.0), [0.1, 0.3, 0.4, -0.8, -0.3, 0.9]);
    env.set_velocity(Vector2::new(0.7, 1.5), [0.5, -1.0, 2.0, 1.0, -2.0, 0.5]);
    let m = env.body().total_mass;
    let p0 = env.momentum();
    let g = env.config().gravity;
    let dt = env.config().substep_dt();
    let n = (1.0 / dt).round() as usize;
    let (mut px, mut vz) = (0.0f64, 0.0f64);
    for k in 1..=n {
        env.substep([0.0; 5]);
        let p = env.momentum();
        px = px.max((p.x - p0.x).abs());
        vz = vz.max((p.y / m - (p0.y / m - g * dt * k as f64)).abs());
    }
    (px, vz)
}

/// Largest per-substep energy increase over unactuated drops onto three
/// terrains.
pub fn passive_energy_worst_gain() -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (seed, level, drop) in [(0u64, 0u32, 0.05), (1, 5, 0.1), (2, 10, 0.02)] {
        let mut env = ClimbEnv::new(quiet_config(), seed).unwrap();
        env.reset(level).unwrap();
        let shape: [f64; 6] = env.state().coords.shape.as_slice().try_into().unwrap();
        let base = env.base_position();
        env.set_configuration(base + Vector2::new(0.0, drop), shape);
        env.set_velocity(Vector2::new(0.3, -0.2), [0.4, -0.5, 0.8, 0.2, -0.6, 0.3]);
        let mut e = env.total_energy();
        for _ in 0..2000 {
            env.substep([0.0; 5]);
            let next = env.total_energy();
            worst = worst.max(next - e);
            e = next;
        }
    }
    worst
}

pub struct MixedRun {
    pub max_penetration: f64,
    pub max_torque_ratio: f64,
    /// Control steps where an applied torque exceeded its clamp.
    pub clamp_violations: usize,
}

/// 60 s of held random actions, cycling through curriculum levels on reset.
pub fn mixed_run() -> MixedRun {
    let mut env = ClimbEnv::new(EnvConfig::default(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let steps = (60.0 / env.config().control_dt).round() as usize;
    let limits = env.config().model.torque_limits();
    let mut run = MixedRun {
        max_penetration: 0.0,
        max_torque_ratio: 0.0,
        clamp_violations: 0,
    };
    let mut level = 0;
    let mut action = [0.0; 5];
    for k in 0..steps {
        // hold each random target for a few steps so the robot actually moves
        if k % 10 == 0 {
            action = random_action(&mut rng);
        }
        let out = env.step(&action).unwrap();
        if env.state().torques.iter().zip(&limits).any(|(t, l)| t.abs() > *l) {
            run.clamp_violations += 1;
        }
        if out.done.is_terminal() {
            run.max_penetration = run.max_penetration.max(env.stats().max_penetration);
            run.max_torque_ratio = run.max_torque_ratio.max(env.stats().max_torque_ratio);
            level = (level + 3) % 11;
            env.reset(level).unwrap();
        }
    }
    run.max_penetration = run.max_penetration.max(env.stats().max_penetration);
    run.max_torque_ratio = run.max_torque_ratio.max(env.stats().max_torque_ratio);
    run
}
