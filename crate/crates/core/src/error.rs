use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: truncated file, expected {expected} bytes but found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cluster has no members")]
    EmptyCluster,

    #[error("k-means needs at least two seeds, got {0}")]
    InvalidSeeds(usize),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("alpha must lie in [0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("k_farthest must be at least 1")]
    InvalidKFarthest,

    #[error("requested {requested} items from a dataset of {available}")]
    InvalidCount { requested: usize, available: usize },

    #[error("all cluster members coincide with the centroid")]
    DegenerateGeometry,

    #[error("training set is empty")]
    EmptyTrain,

    #[error("condensed set was built from dataset {expected}, not {found}")]
    StaleCondensedSet { expected: String, found: String },

    #[error("histogram bin edges must be strictly increasing with at least two entries")]
    InvalidBins,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the error family, used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 74,
            Error::Format { .. }
            | Error::TruncatedFile { .. }
            | Error::CountMismatch { .. }
            | Error::Json { .. }
            | Error::InvalidDataset(_) => 65,
            Error::InvalidAlpha(_)
            | Error::InvalidKFarthest
            | Error::InvalidCount { .. }
            | Error::InvalidSeeds(_)
            | Error::InvalidBins => 64,
            Error::StaleCondensedSet { .. } => 66,
            Error::EmptyCluster
            | Error::EmptyDataset
            | Error::EmptyTrain
            | Error::DegenerateGeometry => 67,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
