use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its constraint.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rejected point: non-finite coordinate ({x}, {y}, {z})")]
    RejectedPoint { x: f64, y: f64, z: f64 },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("multi-scale partition is only defined for the api scheme, got {0}")]
    UnsupportedScheme(&'static str),

    #[error("point cloud has no semantic labels")]
    MissingLabels,

    #[error("grid/cloud mismatch: grid holds {grid} points, cloud yields {cloud}")]
    GridMismatch { grid: usize, cloud: usize },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("label count mismatch: expected {expected} labels, file holds {found}")]
    LabelCount { expected: usize, found: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed { path: path.into(), reason: reason.into() }
    }
}
