//! Reward terms for wall climbing and the velocity tracking score.
//!
//! Every term is computed unweighted and then summed with its weight in a
//! fixed row order, so a breakdown can be logged next to the total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Term names in row order; also the reward CSV column order.
pub const TERM_NAMES: [&str; 16] = [
    "tracking_velocity",
    "collision",
    "climb_high",
    "termination",
    "orientation",
    "rated_torques",
    "dof_acc",
    "dof_vel",
    "dof_pos_limits",
    "dof_vel_limits",
    "torque_limits",
    "center",
    "yaw",
    "collar_angles",
    "low_foot",
    "base_height",
];

pub const TRACKING_SIGMA: f64 = 0.01;
pub const COLLISION_THRESHOLD: f64 = 0.1;
pub const CLIMB_HEIGHT: f64 = 3.0;
pub const FALL_GRAVITY_Z: f64 = 0.2;
pub const BASE_HEIGHT_PIVOT: f64 = 0.6;
pub const LOW_FOOT_REFERENCE: f64 = 0.2;
pub const LOW_FOOT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LimitNorm {
    #[default]
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: [f64; 16],
    /// Use `exp(-x / sigma)` in place of `exp(-x^2 / sigma)` in the kernel.
    pub kernel_linear_exponent: bool,
    pub limit_norm: LimitNorm,
    /// Use `sum (tau / tau_rate)^2` for the rated-torque term.
    pub rated_torques_squared: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: [
                3.0, -1.0, 5.0, -500.0, -10.0, -3e-2, -1e-6, -3e-4, -10.0, -0.1, -1e-3, -0.1, -1.0, -1.0, 0.05, 0.4,
            ],
            kernel_linear_exponent: false,
            limit_norm: LimitNorm::L1,
            rated_torques_squared: false,
        }
    }
}

/// `f(x, sigma) = exp(-x^2 / sigma) - 0.6 x^2`.
pub fn f_kernel(x: f64, sigma: f64) -> f64 {
    (-x * x / sigma).exp() - 0.6 * x * x
}

fn kernel(x: f64, sigma: f64, linear_exponent: bool) -> f64 {
    if linear_exponent {
        (-x / sigma).exp() - 0.6 * x * x
    } else {
        f_kernel(x, sigma)
    }
}

/// Everything the reward needs from one control step. Out-of-plane
/// quantities are present and zero for planar states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardInputs {
    /// Base linear velocity `(x, y, z)`.
    pub base_vel: [f64; 3],
    pub v_ref: f64,
    /// Contact force magnitudes of the penalised links.
    pub penalized_contact_forces: Vec<f64>,
    /// Base position `(x, y, z)`.
    pub base_pos: [f64; 3],
    /// Gravity direction in the base frame.
    pub gravity: [f64; 3],
    pub yaw: f64,
    pub torques: Vec<f64>,
    pub rated_torques: Vec<f64>,
    pub torque_max: Vec<f64>,
    pub joint_pos: Vec<f64>,
    pub joint_vel: Vec<f64>,
    pub joint_acc: Vec<f64>,
    pub pos_min: Vec<f64>,
    pub pos_max: Vec<f64>,
    pub vel_min: Vec<f64>,
    pub vel_max: Vec<f64>,
    pub collar_angles: Vec<f64>,
    pub foot_heights: Vec<f64>,
}

impl RewardInputs {
    fn check_finite(&self) -> Result<()> {
        let scalars: [(&'static str, &[f64]); 18] = [
            ("base_vel", &self.base_vel),
            ("v_ref", std::slice::from_ref(&self.v_ref)),
            ("penalized_contact_forces", &self.penalized_contact_forces),
            ("base_pos", &self.base_pos),
            ("gravity", &self.gravity),
            ("yaw", std::slice::from_ref(&self.yaw)),
            ("torques", &self.torques),
            ("rated_torques", &self.rated_torques),
            ("torque_max", &self.torque_max),
            ("joint_pos", &self.joint_pos),
            ("joint_vel", &self.joint_vel),
            ("joint_acc", &self.joint_acc),
            ("pos_min", &self.pos_min),
            ("pos_max", &self.pos_max),
            ("vel_min", &self.vel_min),
            ("vel_max", &self.vel_max),
            ("collar_angles", &self.collar_angles),
            ("foot_heights", &self.foot_heights),
        ];
        for (field, values) in scalars {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput { field });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tracking_velocity: f64,
    pub collision: f64,
    pub climb_high: f64,
    pub termination: f64,
    pub orientation: f64,
    pub rated_torques: f64,
    pub dof_acc: f64,
    pub dof_vel: f64,
    pub dof_pos_limits: f64,
    pub dof_vel_limits: f64,
    pub torque_limits: f64,
    pub center: f64,
    pub yaw: f64,
    pub collar_angles: f64,
    pub low_foot: f64,
    pub base_height: f64,
    pub weighted_total: f64,
}

impl RewardBreakdown {
    pub fn terms(&self) -> [f64; 16] {
        [
            self.tracking_velocity,
            self.collision,
            self.climb_high,
            self.termination,
            self.orientation,
            self.rated_torques,
            self.dof_acc,
            self.dof_vel,
            self.dof_pos_limits,
            self.dof_vel_limits,
            self.torque_limits,
            self.center,
            self.yaw,
            self.collar_angles,
            self.low_foot,
            self.base_height,
        ]
    }

    pub fn csv_header() -> String {
        let mut h = TERM_NAMES.join(",");
        h.push_str(",total");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row: Vec<String> = self.terms().iter().map(|v| format!("{v:.9e}")).collect();
        row.push(format!("{:.9e}", self.weighted_total));
        row.join(",")
    }
}

fn clip_residual(values: &[f64], lo: &[f64], hi: &[f64], norm: LimitNorm) -> f64 {
    let residuals = values.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v - v.clamp(l.min(*h), h.max(*l)));
    match norm {
        LimitNorm::L1 => residuals.map(f64::abs).sum(),
        LimitNorm::L2 => residuals.map(|r| r * r).sum::<f64>().sqrt(),
    }
}

fn scaled(values: &[f64], factor: f64) -> Vec<f64> {
    values.iter().map(|v| v * factor).collect()
}

fn sum_sq(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

pub fn tracking_error(vz: f64, vx: f64, v_ref: f64) -> f64 {
    (vz - v_ref).powi(2) + vx * vx
}

pub fn compute_rewards(inputs: &RewardInputs, config: &RewardConfig) -> Result<RewardBreakdown> {
    inputs.check_finite()?;
    let [vx, _, vz] = inputs.base_vel;
    let [_, py, pz] = inputs.base_pos;
    let [gx, gy, gz] = inputs.gravity;
    let norm = config.limit_norm;
    let tau_neg: Vec<f64> = inputs.torque_max.iter().map(|t| -0.8 * t).collect();

    let mut b = RewardBreakdown {
        tracking_velocity: kernel(tracking_error(vz, vx, inputs.v_ref), TRACKING_SIGMA, config.kernel_linear_exponent),
        collision: inputs
            .penalized_contact_forces
            .iter()
            .filter(|f| f.abs() > COLLISION_THRESHOLD)
            .count() as f64,
        climb_high: f64::from(u8::from(pz > CLIMB_HEIGHT)),
        termination: f64::from(u8::from(gz > FALL_GRAVITY_Z)),
        orientation: gx * gx + gy * gy,
        rated_torques: inputs
            .torques
            .iter()
            .zip(&inputs.rated_torques)
            .map(|(t, r)| if config.rated_torques_squared { (t / r).powi(2) } else { (t / r).abs() })
            .sum(),
        dof_acc: sum_sq(&inputs.joint_acc),
        dof_vel: sum_sq(&inputs.joint_vel),
        dof_pos_limits: clip_residual(&inputs.joint_pos, &scaled(&inputs.pos_min, 0.8), &scaled(&inputs.pos_max, 0.8), norm),
        dof_vel_limits: clip_residual(&inputs.joint_vel, &scaled(&inputs.vel_min, 0.6), &scaled(&inputs.vel_max, 0.6), norm),
        torque_limits: clip_residual(&inputs.torques, &tau_neg, &scaled(&inputs.torque_max, 0.8), norm),
        center: py * py,
        yaw: inputs.yaw * inputs.yaw,
        collar_angles: sum_sq(&inputs.collar_angles),
        low_foot: inputs
            .foot_heights
            .iter()
            .map(|z| (z.max(LOW_FOOT_FLOOR) / LOW_FOOT_REFERENCE).ln())
            .sum(),
        base_height: (pz - BASE_HEIGHT_PIVOT) + 9.0 * (pz - BASE_HEIGHT_PIVOT).min(0.0),
        weighted_total: 0.0,
    };
    b.weighted_total = weighted_total(&b.terms(), &config.weights);
    Ok(b)
}

/// Weighted sum in row order.
pub fn weighted_total(terms: &[f64; 16], weights: &[f64; 16]) -> f64 {
    terms.iter().zip(weights).fold(0.0, |acc, (t, w)| acc + w * t)
}

/// Mean of the tracking kernel over `(vz, vx, v_ref)` samples.
pub fn tracking_score(trajectory: &[(f64, f64, f64)]) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let sum: f64 = trajectory
        .iter()
        .map(|&(vz, vx, v_ref)| f_kernel(tracking_error(vz, vx, v_ref), TRACKING_SIGMA))
        .sum();
    Ok(sum / trajectory.len() as f64)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn planar_inputs() -> RewardInputs {
        RewardInputs {
            base_vel: [0.0, 0.0, 0.3],
            v_ref: 0.3,
            penalized_contact_forces: vec![0.0; 6],
            base_pos: [0.0, 0.0, 0.6],
            gravity: [0.0, 0.0, -1.0],
            yaw: 0.0,
            torques: vec![0.0; 5],
            rated_torques: vec![12.0; 5],
            torque_max: vec![48.0, 50.0, 50.0, 50.0, 50.0],
            joint_pos: vec![0.0; 5],
            joint_vel: vec![0.0; 5],
            joint_acc: vec![0.0; 5],
            pos_min: vec![-1.0; 5],
            pos_max: vec![1.0; 5],
            vel_min: vec![-20.0; 5],
            vel_max: vec![20.0; 5],
            collar_angles: vec![0.0; 4],
            foot_heights: vec![0.2; 4],
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(f_kernel(0.0, 0.01), 1.0);
        assert_relative_eq!(f_kernel(0.1, 0.01), (-1.0f64).exp() - 0.006, epsilon = 1e-15);
        assert_relative_eq!(f_kernel(0.1, 0.01), 0.361_879_441_171_442_3, epsilon = 1e-12);
        for i in 0..100 {
            let x = i as f64 * 0.037;
            assert_eq!(f_kernel(x, 0.01), f_kernel(-x, 0.01));
        }
    }

    #[test]
    fn kernel_peaks_at_zero() {
        for i in -10_000..=10_000 {
            let x = i as f64 * 1e-3;
            assert!(f_kernel(x, 0.01) <= 1.0);
        }
    }

    #[test]
    fn linear_exponent_variant() {
        assert_relative_eq!(kernel(0.01, 0.01, true), (-1.0f64).exp() - 0.6e-4, epsilon = 1e-15);
    }

    #[test]
    fn perfect_tracking() {
        let b = compute_rewards(&planar_inputs(), &RewardConfig::default()).unwrap();
        assert_eq!(b.tracking_velocity, 1.0);
        assert_eq!(b.tracking_velocity * RewardConfig::default().weights[0], 3.0);
    }

    #[test]
    fn termination_threshold_is_strict() {
        let cfg = RewardConfig::default();
        let mut inp = planar_inputs();
        inp.gravity = [0.0, 0.0, 0.25];
        let b = compute_rewards(&inp, &cfg).unwrap();
        assert_eq!(b.termination, 1.0);
        assert_eq!(b.termination * cfg.weights[3], -500.0);
        inp.gravity = [0.0, 0.0, 0.2];
        assert_eq!(compute_rewards(&inp, &cfg).unwrap().termination, 0.0);
    }

    #[test]
    fn base_height_pivot() {
        let b = compute_rewards(&planar_inputs(), &RewardConfig::default()).unwrap();
        assert_eq!(b.base_height, 0.0);
        let mut inp = planar_inputs();
        inp.base_pos[2] = 0.4;
        let low = compute_rewards(&inp, &RewardConfig::default()).unwrap();
        assert_relative_eq!(low.base_height, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn planar_out_of_plane_terms_vanish() {
        let b = compute_rewards(&planar_inputs(), &RewardConfig::default()).unwrap();
        assert_eq!((b.center, b.yaw, b.collar_angles), (0.0, 0.0, 0.0));
    }

    #[test]
    fn climb_high_and_collision() {
        let mut inp = planar_inputs();
        inp.base_pos[2] = 3.01;
        inp.penalized_contact_forces = vec![0.05, 0.11, 0.0, 3.0, 0.1, 0.0];
        let b = compute_rewards(&inp, &RewardConfig::default()).unwrap();
        assert_eq!(b.climb_high, 1.0);
        assert_eq!(b.collision, 2.0);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let mut inp = planar_inputs();
        inp.joint_vel[2] = f64::NAN;
        assert!(matches!(
            compute_rewards(&inp, &RewardConfig::default()),
            Err(Error::NonFiniteInput { field: "joint_vel" })
        ));
    }

    #[test]
    fn tracking_score_examples() {
        assert_eq!(tracking_score(&[(0.4, 0.0, 0.4); 10]).unwrap(), 1.0);
        let e = 0.1f64.sqrt();
        let s = tracking_score(&[(0.5 + e, 0.0, 0.5); 7]).unwrap();
        assert_relative_eq!(s, f_kernel(0.1, 0.01), epsilon = 1e-12);
        assert!(matches!(tracking_score(&[]), Err(Error::EmptyTrajectory)));
    }
}
