use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("regularization must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("linear system is singular")]
    Singular,

    #[error("pool of size {size} exceeds the limit of {limit} for this operation")]
    SizeGuard { size: usize, limit: usize },

    #[error("all contribution ratios are zero; fall back to uniform labeling")]
    DegenerateScores,

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("index {index} out of range for pool of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("eigenvalue {index} is zero; cannot whiten that direction")]
    ZeroEigenvalue { index: usize },

    #[error(transparent)]
    Idx(#[from] crate::data_io::IdxError),

    #[error("dataset files not found in {}", path.display())]
    MissingData { path: PathBuf },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
