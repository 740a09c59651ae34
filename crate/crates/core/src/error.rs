use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (infeasible point,
    /// zero entry where a strictly positive one is required, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Solver or pipeline configuration is inconsistent. The string names
    /// the failing field where one exists.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate network: {0}")]
    DegenerateNetwork(String),

    #[error("inexact-oracle certification failed: {0}")]
    Certification(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
