//! Planar climbing simulator.

pub mod contact;
pub mod dynamics;
pub mod env;
pub mod model;
pub mod obs;

pub use contact::{contact_resolve, ContactForce, PenaltyLaw};
pub use dynamics::{Applied, Body, ContactParams, Coords, PhysicsFlags, ProbeContact, SubstepReport};
pub use env::{ClimbEnv, Done, EnvConfig, EpisodeStats, PerturbConfig, RandomizeConfig, SimState, StepOutcome, TrajectoryRow, TRAJECTORY_HEADER};
pub use model::{pd_torques, PdGains, RobotModel, CONTACT_NAMES, JOINT_NAMES, N_JOINTS};
pub use obs::{ActorObs, CriticObs};
