//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the pruning library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { len: usize, rows: usize, cols: usize },

    #[error("non-finite value in {what} at flat index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("matrix is not symmetric (entry [{row},{col}] differs from its transpose)")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive definite: pivot {pivot} is {value}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("input feature {feature} has norm {value}; use eps > 0 to guard dead features")]
    NonPositiveNorm { feature: usize, value: f64 },

    #[error("restricted normal equations for output column {column} are singular; use lambda > 0")]
    SingularRestrictedSystem { column: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid structure pattern: {0}")]
    InvalidPattern(String),

    #[error("gradient descent diverged at step {step} (objective {objective})")]
    Divergence { step: usize, objective: f64 },

    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {kind}")]
    TensorFormat { path: PathBuf, kind: TensorFormatError },

    #[error("bundle {path}: {reason}")]
    Bundle { path: PathBuf, reason: String },
}

/// Ways a tensor file can be malformed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorFormatError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 8]),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("unsupported rank {0} (expected 2)")]
    UnsupportedRank(u8),
    #[error("reserved header bytes are not zero")]
    ReservedNonZero,
    #[error("dimensions overflow the addressable size")]
    DimOverflow,
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("mask value {value} at flat index {index} is neither 0 nor 1")]
    NotBinary { index: usize, value: f64 },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 for file-system and file-format
    /// failures, 2 for everything the caller could fix by changing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::TensorFormat { .. } | Error::Bundle { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
