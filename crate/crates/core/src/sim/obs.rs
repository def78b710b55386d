//! Observation vectors for the actor and the privileged critic.
//!
//! Planar quantities are embedded in 3-D with `y` lateral: a nose-up pitch
//! is a rotation about `-y`, so out-of-plane components are exactly zero.

use serde::{Deserialize, Serialize};

use super::model::{N_BODIES, N_JOINTS};

/// World `-z` expressed in a base frame pitched by `pitch`.
pub fn gravity_dir(pitch: f64) -> [f64; 3] {
    [-pitch.sin(), 0.0, -pitch.cos()]
}

/// Base angular velocity for a pitch rate.
pub fn angular_velocity(pitch_rate: f64) -> [f64; 3] {
    [0.0, -pitch_rate, 0.0]
}

/// Unit quaternion `(w, x, y, z)` of a pitch rotation.
pub fn pitch_quaternion(pitch: f64) -> [f64; 4] {
    let h = 0.5 * pitch;
    [h.cos(), 0.0, -h.sin(), 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActorObs {
    pub angular_velocity: [f64; 3],
    pub gravity_dir: [f64; 3],
    pub joint_pos: [f64; N_JOINTS],
    pub joint_vel: [f64; N_JOINTS],
    pub v_ref_z: f64,
}

impl ActorObs {
    pub const DIM: usize = 17;

    pub fn write_to(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.angular_velocity);
        out.extend_from_slice(&self.gravity_dir);
        out.extend_from_slice(&self.joint_pos);
        out.extend_from_slice(&self.joint_vel);
        out.push(self.v_ref_z);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        self.write_to(&mut v);
        v
    }

    /// Inverse of [`ActorObs::to_vec`]; panics unless `v.len() == DIM`.
    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::DIM, "actor observation length");
        let arr = |s: &[f64]| -> [f64; N_JOINTS] { s.try_into().unwrap() };
        Self {
            angular_velocity: [v[0], v[1], v[2]],
            gravity_dir: [v[3], v[4], v[5]],
            joint_pos: arr(&v[6..11]),
            joint_vel: arr(&v[11..16]),
            v_ref_z: v[16],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticObs {
    pub actor: ActorObs,
    /// Distance from the base origin to the nearest surface.
    pub wall_distance: f64,
    pub wall_normal: [f64; 3],
    pub torques: [f64; N_JOINTS],
    pub base_pos: [f64; 3],
    pub orientation: [f64; 4],
    pub base_vel: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub friction: [f64; 2],
    pub link_masses: [f64; N_BODIES],
    pub f_ext: [f64; 3],
    pub tau_ext: [f64; 3],
}

impl CriticObs {
    pub const DIM: usize = 53;

    pub fn write_to(&self, out: &mut Vec<f64>) {
        self.actor.write_to(out);
        out.push(self.wall_distance);
        out.extend_from_slice(&self.wall_normal);
        out.extend_from_slice(&self.torques);
        out.extend_from_slice(&self.base_pos);
        out.extend_from_slice(&self.orientation);
        out.extend_from_slice(&self.base_vel);
        out.extend_from_slice(&self.angular_velocity);
        out.extend_from_slice(&self.friction);
        out.extend_from_slice(&self.link_masses);
        out.extend_from_slice(&self.f_ext);
        out.extend_from_slice(&self.tau_ext);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::DIM);
        self.write_to(&mut v);
        v
    }
}
