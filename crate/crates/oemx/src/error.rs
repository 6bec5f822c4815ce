//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Everything that can go wrong while building statistics, fitting,
/// cross-validating, or reading/writing files.
#[derive(Debug, Error)]
pub enum OemError {
    #[error("design matrix is empty")]
    EmptyMatrix,

    #[error("column {0} has zero variance and cannot be scaled")]
    ZeroVarianceColumn(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("fold {0} is empty")]
    EmptyFold(usize),

    #[error("eigenvalue estimate did not stabilize within {0} iterations")]
    NotConverged(usize),

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("no penalized coordinate has a positive weight")]
    AllWeightsZero,

    #[error("iterates became non-finite at lambda index {0}")]
    NonFinite(usize),

    #[error("matrix is not positive semidefinite")]
    NotPsd,

    #[error("response must take values in {{0, 1}}")]
    NonBinaryResponse,

    #[error("number of folds must satisfy 2 <= k <= n; got k = {k}, n = {n}")]
    BadK { k: usize, n: usize },

    #[error("parse error at line {line}, column {col}: {msg}")]
    ParseError { line: usize, col: usize, msg: String },

    #[error("ragged row at line {0}")]
    RaggedRow(usize),

    #[error("response column not found: {0}")]
    MissingResponse(String),

    #[error("not a matrix file (bad magic)")]
    BadMagic,

    #[error("matrix file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("unsupported matrix file (version {version}, dtype {dtype}, layout {layout})")]
    UnsupportedMatrixFile { version: u32, dtype: u32, layout: u32 },

    #[error("unknown model: {0}")]
    UnknownModel(String),

    #[error("lambda {0} lies outside the fitted grid; refusing to extrapolate")]
    LambdaOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, OemError>;

impl OemError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OemError::Io { path: path.into(), source }
    }
}
