use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("target ({x:.4}, {y:.4}, {z:.4}) is outside the leg workspace")]
    Unreachable { x: f64, y: f64, z: f64 },

    #[error("wall normal must be a horizontal unit vector, got |n| = {norm}")]
    DegenerateNormal { norm: f64 },

    #[error("grid must have at least 2 nodes per axis with non-empty ranges")]
    EmptyGrid,

    #[error("slice at wall distance {distance:.4} m has no reachable node")]
    NoMinimum { distance: f64 },

    #[error("invalid terrain spec: {0}")]
    InvalidSpec(String),

    #[error("query point ({x:.4}, {z:.4}) is outside the terrain bounds")]
    OutOfBounds { x: f64, z: f64 },

    #[error("action contains a non-finite component at index {index}")]
    NonFiniteAction { index: usize },

    #[error("reward input `{field}` is not finite")]
    NonFiniteInput { field: &'static str },

    #[error("episode already finished; call reset first")]
    EpisodeDone,

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("loss became non-finite ({0} consecutive aborted updates)")]
    NonFiniteLoss(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    ConfigParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
