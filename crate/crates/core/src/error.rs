//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up (mismatched shapes, bad ranks, empty outputs).
    #[error("shape error: {0}")]
    Shape(String),

    /// A value violates an operation's preconditions (bad labels, bad extents, bad flags).
    #[error("invalid value: {0}")]
    Value(String),

    /// An operation produced NaN or Inf.
    #[error("non-finite values produced by {0}")]
    NonFinite(String),

    /// Backward-pass misuse: non-scalar loss, stale tape, missing gradient.
    #[error("autodiff error: {0}")]
    Autodiff(String),

    /// Checkpoint file is corrupt, has the wrong version, or fails strict matching.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Run configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset files are missing, undecodable, or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
