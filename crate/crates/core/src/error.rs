use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate line: endpoints ({x}, {y}) coincide")]
    DegenerateLine { x: f64, y: f64 },

    /// |cos θ| fell below the singularity floor, so velocity is undefined.
    #[error("angle-singular: theta = {theta_deg} deg is within the cosine floor of 90 deg")]
    AngleSingular { theta_deg: f64 },

    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn ingestion(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingestion {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
