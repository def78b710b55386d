//! Forward kinematics, Jacobians and Jacobian-transpose statics for one
//! collar/hip/knee leg.
//!
//! Leg-base frame: `x` points across the gap toward the wall the foot braces
//! against, `y` is lateral and `z` is up. The collar is a roll about `x`
//! applied first; the hip sits `collar_offset` along the rolled `y` axis and
//! hip and knee pitch in the rolled `x`-`z` plane. A positive hip angle swings
//! the foot toward `+x`. With all angles zero the leg hangs straight down.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and actuation limits of one 3-DOF leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegChain {
    pub collar_offset: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub collar_angle_fixed: f64,
    /// `[min, max]` per joint, ordered collar, hip, knee.
    pub joint_limits: [[f64; 2]; 3],
    pub torque_limits: [f64; 3],
    pub rated_torques: [f64; 3],
}

impl Default for LegChain {
    fn default() -> Self {
        Self {
            collar_offset: 0.0,
            thigh_length: 0.25,
            calf_length: 0.25,
            collar_angle_fixed: 0.0,
            joint_limits: [[-0.8, 0.8], [-2.6, 2.6], [-2.8, 2.8]],
            torque_limits: [25.0; 3],
            rated_torques: [12.0; 3],
        }
    }
}

impl LegChain {
    pub fn validate(&self) -> Result<()> {
        let lengths = [self.thigh_length, self.calf_length];
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidConfig("link lengths must be positive".into()));
        }
        if !(self.collar_offset.is_finite() && self.collar_offset >= 0.0) {
            return Err(Error::InvalidConfig("collar offset must be non-negative".into()));
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::InvalidConfig("joint limits need min < max".into()));
        }
        if self.torque_limits.iter().chain(&self.rated_torques).any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("torque limits must be positive".into()));
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.thigh_length + self.calf_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegAngles {
    pub collar: f64,
    pub hip: f64,
    pub knee: f64,
}

impl LegAngles {
    pub const fn new(collar: f64, hip: f64, knee: f64) -> Self {
        Self { collar, hip, knee }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.collar, self.hip, self.knee)
    }
}

/// Force acting on the foot, expressed in the leg-base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootForce(pub Vector3<f64>);

impl FootForce {
    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTorques {
    pub collar: f64,
    pub hip: f64,
    pub knee: f64,
}

impl JointTorques {
    pub fn as_array(&self) -> [f64; 3] {
        [self.collar, self.hip, self.knee]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, t| m.max(t.abs()))
    }
}

/// Which way the knee bends when solving inverse kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KneeBranch {
    /// Knee behind the hip-foot line (non-negative knee angle).
    Inward,
    Outward,
}

// Foot position in the collar-rolled frame, before the roll is applied.
fn unrolled_foot(chain: &LegChain, hip: f64, knee: f64) -> Vector3<f64> {
    let (l1, l2) = (chain.thigh_length, chain.calf_length);
    Vector3::new(
        l1 * hip.sin() + l2 * (hip + knee).sin(),
        chain.collar_offset,
        -l1 * hip.cos() - l2 * (hip + knee).cos(),
    )
}

fn roll(angle: f64, v: Vector3<f64>) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    Vector3::new(v.x, v.y * c - v.z * s, v.y * s + v.z * c)
}

pub fn fk_foot(chain: &LegChain, angles: LegAngles) -> Vector3<f64> {
    roll(angles.collar, unrolled_foot(chain, angles.hip, angles.knee))
}

/// Translational Jacobian of the foot; columns ordered collar, hip, knee.
pub fn foot_jacobian(chain: &LegChain, angles: LegAngles) -> Matrix3<f64> {
    let (l1, l2) = (chain.thigh_length, chain.calf_length);
    let (h, k) = (angles.hip, angles.knee);
    let a = unrolled_foot(chain, h, k);
    let (s, c) = angles.collar.sin_cos();

    let d_collar = Vector3::new(0.0, -a.y * s - a.z * c, a.y * c - a.z * s);
    let dh = Vector3::new(l1 * h.cos() + l2 * (h + k).cos(), 0.0, l1 * h.sin() + l2 * (h + k).sin());
    let dk = Vector3::new(l2 * (h + k).cos(), 0.0, l2 * (h + k).sin());
    Matrix3::from_columns(&[d_collar, roll(angles.collar, dh), roll(angles.collar, dk)])
}

/// Joint torques that balance an external force on the foot: `-J^T f`.
pub fn joint_torques(chain: &LegChain, angles: LegAngles, force: FootForce) -> JointTorques {
    let tau = -(foot_jacobian(chain, angles).transpose() * force.0);
    JointTorques {
        collar: tau[0],
        hip: tau[1],
        knee: tau[2],
    }
}

pub fn ik_foot(chain: &LegChain, target: Vector3<f64>) -> Result<LegAngles> {
    ik_foot_branch(chain, target, KneeBranch::Inward)
}

/// Inverse kinematics with the collar held at `collar_angle_fixed`.
pub fn ik_foot_branch(chain: &LegChain, target: Vector3<f64>, branch: KneeBranch) -> Result<LegAngles> {
    const TOL: f64 = 1e-9;
    let unreachable = || Error::Unreachable {
        x: target.x,
        y: target.y,
        z: target.z,
    };
    let collar = chain.collar_angle_fixed;
    let local = roll(-collar, target);
    if (local.y - chain.collar_offset).abs() > TOL {
        return Err(unreachable());
    }
    let (l1, l2) = (chain.thigh_length, chain.calf_length);
    let dist = local.x.hypot(local.z);
    if dist > l1 + l2 + TOL || dist < (l1 - l2).abs() - TOL {
        return Err(unreachable());
    }
    let cos_knee = ((dist * dist - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = match branch {
        KneeBranch::Inward => cos_knee.acos(),
        KneeBranch::Outward => -cos_knee.acos(),
    };
    let hip = local.x.atan2(-local.z) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    Ok(LegAngles { collar, hip, knee })
}
