//! Geometry, mass layout and actuation of the planar robot.
//!
//! The sagittal model has a front body and a back body joined by a pitch
//! waist, and one merged leg per body standing in for a left/right pair.
//! Angles are counter-clockwise in the `x`-`z` plane (nose-up positive).
//! Leg angles follow the same convention as [`crate::kinematics`]: zero hangs
//! straight down and a positive hip swings the foot toward the body's `+x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::LegChain;

/// Actuated joints in action order.
pub const JOINT_NAMES: [&str; 5] = ["waist", "hip_f", "knee_f", "hip_b", "knee_b"];
pub const N_JOINTS: usize = 5;
/// Shape coordinates: body pitch followed by the actuated joints.
pub const N_SHAPE: usize = 6;
pub const N_BODIES: usize = 6;
pub const BODY_NAMES: [&str; N_BODIES] = ["front_body", "back_body", "thigh_f", "calf_f", "thigh_b", "calf_b"];

/// Contact probes, in order.
pub const CONTACT_NAMES: [&str; 9] = [
    "waist",
    "front_mid",
    "back_mid",
    "hip_f",
    "hip_b",
    "knee_f",
    "knee_b",
    "foot_f",
    "foot_b",
];
pub const N_CONTACTS: usize = 9;
pub const FOOT_F: usize = 7;
pub const FOOT_B: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    /// Waist to hip distance of each body link.
    pub body_half_length: f64,
    pub body_link_mass: f64,
    /// Mass of one physical leg; a merged planar leg carries two.
    pub leg_mass: f64,
    /// Share of a leg's mass in the thigh, the rest sits in the calf.
    pub thigh_mass_fraction: f64,
    pub front_leg: LegChain,
    pub back_leg: LegChain,
    pub waist_limits: [f64; 2],
    pub waist_torque_limit: f64,
    pub waist_rated_torque: f64,
    /// Motors behind each merged leg joint.
    pub motors_per_leg_joint: f64,
    /// Per-motor proportional gain.
    pub kp: f64,
    /// Per-motor derivative gain.
    pub kd: f64,
    /// Reflected rotor inertia per motor.
    pub armature: f64,
    /// Velocity limits used by the reward (waist, then leg joints).
    pub waist_vel_limit: f64,
    pub leg_vel_limit: f64,
    /// Standing pose for the leg joints (front hip, front knee).
    pub stand_hip: f64,
    pub stand_knee: f64,
    pub stand_height: f64,
    pub action_margin: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        // Standing with the hip 0.4 m above a foot directly below it.
        let stand_knee = (1.0f64 - 2.0 * 0.4 * 0.4 / (4.0 * 0.25 * 0.25)).acos();
        let stand_knee = std::f64::consts::PI - stand_knee;
        let stand_hip = -0.5 * stand_knee;
        let front_leg = LegChain {
            joint_limits: [[0.0, 0.0 + 1e-9], [stand_hip - 2.2, stand_hip + 2.2], [stand_knee - 1.15, stand_knee + 1.15]],
            torque_limits: [25.0; 3],
            rated_torques: [8.3; 3],
            ..LegChain::default()
        };
        let back_leg = LegChain {
            joint_limits: [[0.0, 0.0 + 1e-9], [-stand_hip - 2.2, -stand_hip + 2.2], [-stand_knee - 1.15, -stand_knee + 1.15]],
            ..front_leg.clone()
        };
        Self {
            body_half_length: 0.38,
            body_link_mass: 6.0,
            leg_mass: 1.5,
            thigh_mass_fraction: 0.8,
            front_leg,
            back_leg,
            waist_limits: [-1.2, 1.2],
            waist_torque_limit: 48.0,
            waist_rated_torque: 18.0,
            motors_per_leg_joint: 2.0,
            kp: 30.0,
            kd: 0.7,
            armature: 0.01,
            waist_vel_limit: 12.0,
            leg_vel_limit: 15.0,
            stand_hip,
            stand_knee,
            stand_height: 0.4,
            action_margin: 0.05,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        self.front_leg.validate()?;
        self.back_leg.validate()?;
        let positive = [
            self.body_half_length,
            self.body_link_mass,
            self.leg_mass,
            self.waist_torque_limit,
            self.kp,
            self.armature,
            self.motors_per_leg_joint,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("robot masses, lengths, gains and limits must be positive".into()));
        }
        if !(self.kd >= 0.0) {
            return Err(Error::InvalidConfig("kd must be non-negative".into()));
        }
        if !(self.thigh_mass_fraction > 0.0 && self.thigh_mass_fraction < 1.0) {
            return Err(Error::InvalidConfig("thigh_mass_fraction must lie in (0, 1)".into()));
        }
        for [lo, hi] in self.joint_limits() {
            if !(hi - lo > 2.0 * self.action_margin) {
                return Err(Error::InvalidConfig("joint range narrower than the action margin".into()));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        2.0 * self.body_link_mass + 4.0 * self.leg_mass
    }

    pub fn body_length(&self) -> f64 {
        2.0 * self.body_half_length
    }

    /// Nominal link masses in [`BODY_NAMES`] order.
    pub fn link_masses(&self) -> [f64; N_BODIES] {
        let pair = 2.0 * self.leg_mass;
        let thigh = pair * self.thigh_mass_fraction;
        let calf = pair - thigh;
        [self.body_link_mass, self.body_link_mass, thigh, calf, thigh, calf]
    }

    pub fn link_lengths(&self) -> [f64; N_BODIES] {
        [
            self.body_half_length,
            self.body_half_length,
            self.front_leg.thigh_length,
            self.front_leg.calf_length,
            self.back_leg.thigh_length,
            self.back_leg.calf_length,
        ]
    }

    pub fn joint_limits(&self) -> [[f64; 2]; N_JOINTS] {
        [
            self.waist_limits,
            self.front_leg.joint_limits[1],
            self.front_leg.joint_limits[2],
            self.back_leg.joint_limits[1],
            self.back_leg.joint_limits[2],
        ]
    }

    pub fn torque_limits(&self) -> [f64; N_JOINTS] {
        let m = self.motors_per_leg_joint;
        [
            self.waist_torque_limit,
            m * self.front_leg.torque_limits[1],
            m * self.front_leg.torque_limits[2],
            m * self.back_leg.torque_limits[1],
            m * self.back_leg.torque_limits[2],
        ]
    }

    /// Rated torque summed over the motors behind each joint.
    pub fn rated_torques(&self) -> [f64; N_JOINTS] {
        let m = self.motors_per_leg_joint;
        [
            self.waist_rated_torque,
            m * self.front_leg.rated_torques[1],
            m * self.front_leg.rated_torques[2],
            m * self.back_leg.rated_torques[1],
            m * self.back_leg.rated_torques[2],
        ]
    }

    pub fn vel_limits(&self) -> [f64; N_JOINTS] {
        [
            self.waist_vel_limit,
            self.leg_vel_limit,
            self.leg_vel_limit,
            self.leg_vel_limit,
            self.leg_vel_limit,
        ]
    }

    pub fn gains(&self) -> PdGains {
        let m = self.motors_per_leg_joint;
        let scale = [1.0, m, m, m, m];
        PdGains {
            kp: scale.map(|s| s * self.kp),
            kd: scale.map(|s| s * self.kd),
        }
    }

    pub fn armatures(&self) -> [f64; N_JOINTS] {
        let m = self.motors_per_leg_joint;
        [self.armature, m * self.armature, m * self.armature, m * self.armature, m * self.armature]
    }

    pub fn standing_joints(&self) -> [f64; N_JOINTS] {
        [0.0, self.stand_hip, self.stand_knee, -self.stand_hip, -self.stand_knee]
    }

    /// Range the affine action map spans, `[min + margin, max - margin]`.
    pub fn action_range(&self) -> [[f64; 2]; N_JOINTS] {
        self.joint_limits().map(|[lo, hi]| [lo + self.action_margin, hi - self.action_margin])
    }

    /// Affine map from `[-1, 1]` onto [`Self::action_range`], clipped.
    pub fn action_to_targets(&self, action: &[f64; N_JOINTS]) -> [f64; N_JOINTS] {
        let ranges = self.action_range();
        std::array::from_fn(|j| {
            let [lo, hi] = ranges[j];
            let a = action[j].clamp(-1.0, 1.0);
            lo + 0.5 * (a + 1.0) * (hi - lo)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: [f64; N_JOINTS],
    pub kd: [f64; N_JOINTS],
}

/// `kp (target - angle) - kd velocity`, clamped to `+-limit` per joint.
pub fn pd_torques(
    angles: &[f64; N_JOINTS],
    velocities: &[f64; N_JOINTS],
    targets: &[f64; N_JOINTS],
    gains: &PdGains,
    limits: &[f64; N_JOINTS],
) -> [f64; N_JOINTS] {
    std::array::from_fn(|j| {
        let raw = gains.kp[j] * (targets[j] - angles[j]) - gains.kd[j] * velocities[j];
        raw.clamp(-limits[j], limits[j])
    })
}
