use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular linear system (dimension {dim})")]
    SingularSystem { dim: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("unknown item id {id:?} at line {line}")]
    UnknownItem { id: String, line: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Configuration problem with a stable, machine-parsable reason code.
    #[error("{reason}: {detail}")]
    Config { reason: &'static str, detail: String },

    #[error("weight assignment has {got} entries, ratings have {expected}")]
    MisalignedWeights { expected: usize, got: usize },

    #[error("{count} users exceed the squared-weight cap (first: user {first})")]
    WeightCapExceeded { count: usize, first: usize },

    #[error("sensitivity violation: {0}")]
    SensitivityViolation(String),

    #[error("cannot compute metric on an empty set: {0}")]
    EmptyMetric(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("bucketed and global metrics disagree: {0}")]
    MetricInconsistency(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SingularSystem { .. } | Error::NotSymmetric { .. }
            | Error::NonFinite(_)
            | Error::MetricInconsistency(_) => {
                ErrorKind::Numerical
            }
            Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::UnknownItem { .. }
            | Error::InvalidDataset(_)
            | Error::Io { .. }
            | Error::Checkpoint(_)
            | Error::EmptyMetric(_)
            | Error::DimensionMismatch(_) => ErrorKind::Data,
            Error::InvalidParameter { .. }
            | Error::Config { .. }
            | Error::MisalignedWeights { .. }
            | Error::WeightCapExceeded { .. }
            | Error::SensitivityViolation(_) => ErrorKind::Config,
        }
    }

    /// Short kebab-case tag for single-line error reports.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::SingularSystem { .. } => "singular-system",
            Error::NotSymmetric { .. } => "not-symmetric",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::Parse { .. } => "parse-error",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::UnknownItem { .. } => "unknown-item",
            Error::InvalidDataset(_) => "invalid-dataset",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::Config { reason, .. } => reason,
            Error::MisalignedWeights { .. } => "misaligned-weights",
            Error::WeightCapExceeded { .. } => "weight-cap-exceeded",
            Error::SensitivityViolation(_) => "sensitivity-violation",
            Error::EmptyMetric(_) => "empty-metric",
            Error::NonFinite(_) => "non-finite",
            Error::MetricInconsistency(_) => "metric-inconsistency",
            Error::Io { .. } => "io-error",
            Error::Checkpoint(_) => "checkpoint-error",
        }
    }
}
