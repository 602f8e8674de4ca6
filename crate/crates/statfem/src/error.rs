//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed text input (mesh files, config files, observation files).
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },

    #[error("sensor placement: {0}")]
    Placement(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Explicit time stepping blew up; the step index identifies where.
    #[error("trajectory diverged at step {step} (state norm {norm:.3e})")]
    Diverged { step: usize, norm: f64 },

    #[error("observation at t = {time} does not align with the dt = {dt} grid")]
    MisalignedObservation { time: f64, dt: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("no feasible point in the hyperparameter grid: {0}")]
    NoFeasiblePoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
