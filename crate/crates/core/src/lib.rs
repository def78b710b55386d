//! Planar chimney-climbing quadruped toolkit.
//!
//! * [`kinematics`] and [`torque_atlas`]: leg statics while bracing between walls.
//! * [`terrain`]: two-wall terrain with a curriculum-controlled floor junction.
//! * [`sim`]: planar articulated-body environment with penalty contacts.
//! * [`rewards`]: per-step reward terms and the velocity tracking score.
//! * [`trainer`]: asymmetric actor-critic PPO with a terrain curriculum.
//! * [`experiments`]: the command-line experiments built on top of these.

pub mod config;
pub mod error;
pub mod experiments;
pub mod kinematics;
pub mod rewards;
pub mod sim;
pub mod terrain;
pub mod torque_atlas;
pub mod trainer;

pub use error::{Error, Result};
pub use nalgebra;
