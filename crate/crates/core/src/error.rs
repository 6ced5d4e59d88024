use thiserror::Error;

/// Errors raised by loading, binning and the calibration statistics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("no usable rows ({rejected} rejected)")]
    NoUsableRows { rejected: usize },

    #[error("sequence lengths differ: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid value at position {index}: {reason}")]
    InvalidValue { index: usize, reason: String },

    #[error("insufficient sample: need at least {needed}, have {have}")]
    InsufficientSample { needed: usize, have: usize },

    #[error("rank correlation undefined for a constant sequence")]
    UndefinedCorrelation,

    #[error("autocorrelation undefined for a constant series")]
    UndefinedAcf,

    #[error("target variance undefined for ensemble size {n} (need n >= 4)")]
    UndefinedVariance { n: usize },

    #[error("cannot split {size} values into {bins} bins")]
    InfeasiblePartition { bins: usize, size: usize },

    #[error("partition does not match dataset: {0}")]
    PartitionMismatch(String),

    #[error("no bin has enough points to be counted")]
    NoCountedBins,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
