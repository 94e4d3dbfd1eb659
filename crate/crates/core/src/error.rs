use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A non-positive gap was reached. `vehicle` is the index of the vehicle
    /// whose gap to its predecessor collapsed, relative to the simulated block
    /// (platoon index once surfaced by the scenario runner).
    #[error("collision: vehicle {vehicle} gap {gap:.6} m at t = {time:.3} s")]
    Collision { vehicle: usize, time: f64, gap: f64 },

    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("objective is not finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("scenario with phi = {phi} failed: {source}")]
    Sweep {
        phi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
