use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmellError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pair sampling impossible: {0}")]
    PairSampling(String),
    #[error("marker initialization failed: {0}")]
    MarkerInit(String),
    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: String, step: usize },
    #[error("quadrature did not converge to {tol:e} within depth {max_depth}")]
    Quadrature { tol: f64, max_depth: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("ragged benchmark input: {0}")]
    Ragged(String),
}

pub type Result<T, E = SmellError> = std::result::Result<T, E>;
