//! Explicit penalty contact law, evaluated per probe.
//!
//! The integrator uses a linearised implicit form of the same law; this
//! function is the reference used for reporting and checks.

use nalgebra::Vector2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyLaw {
    pub stiffness: f64,
    pub damping: f64,
    pub tangential_damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactForce {
    pub normal: f64,
    pub tangential: f64,
    /// World-frame force on the robot.
    pub world: Vector2<f64>,
    pub sliding: bool,
}

/// Force from a probe at signed `distance` (negative when penetrating)
/// moving with world velocity `vel` against a surface with unit `normal`.
pub fn contact_resolve(distance: f64, normal: Vector2<f64>, vel: Vector2<f64>, friction: f64, law: &PenaltyLaw) -> ContactForce {
    if distance >= 0.0 {
        return ContactForce::default();
    }
    let pen = -distance;
    let pen_rate = -normal.dot(&vel);
    let fn_ = (law.stiffness * pen + law.damping * pen_rate).max(0.0);
    let tangent = Vector2::new(-normal.y, normal.x);
    let demand = -law.tangential_damping * tangent.dot(&vel);
    tangential_cap(fn_, demand, friction, normal)
}

/// Clamps a tangential demand to the Coulomb cone.
pub fn tangential_cap(normal_force: f64, demand: f64, friction: f64, normal: Vector2<f64>) -> ContactForce {
    let cap = friction * normal_force;
    let sliding = demand.abs() > cap;
    let ft = demand.clamp(-cap, cap);
    let tangent = Vector2::new(-normal.y, normal.x);
    ContactForce {
        normal: normal_force,
        tangential: ft,
        world: normal * normal_force + tangent * ft,
        sliding,
    }
}
