use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or parameter invariant does not hold. `name` is the
    /// invariant that failed, e.g. `"top_k <= experts_total"`.
    #[error("invalid configuration: {name} ({detail})")]
    InvalidConfig { name: &'static str, detail: String },

    #[error("non-finite router logit at token {token}, expert {expert}")]
    NonFiniteLogit { token: usize, expert: usize },

    #[error("dimension mismatch: {what} expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("coreset must not be empty")]
    EmptyCoreset,

    #[error("expert index {index} out of range for a pool of {experts}")]
    ExpertOutOfRange { index: usize, experts: usize },

    #[error("oracle guard exceeded: {name} = {value} (limit {limit})")]
    OracleGuard {
        name: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("reconstruction loss undefined: every token has a vanishing vanilla output")]
    UndefinedLoss,

    #[error("both hit-rate vectors are zero")]
    ZeroVectors,

    #[error(transparent)]
    Trace(#[from] TraceError),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Two routes that must agree did not. Signals a bug, not bad input.
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            name,
            detail: detail.into(),
        }
    }

    /// Process exit code: 1 for user-facing errors, 2 for internal ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            _ => 1,
        }
    }
}

/// Failures reading or writing trace files. Each variant has a stable code.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad magic bytes: expected \"MOET\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported trace version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("trace header is truncated")]
    TruncatedHeader,

    #[error("trace truncated at record {record}")]
    Truncated { record: usize },

    #[error("shape mismatch in record {record}: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    ShapeMismatch {
        record: usize,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("record {record} out of order: expected (step {expected_step}, layer {expected_layer}), found (step {found_step}, layer {found_layer})")]
    RecordOrder {
        record: usize,
        expected_step: u32,
        expected_layer: u32,
        found_step: u32,
        found_layer: u32,
    },

    #[error("non-finite logit in record {record}")]
    NonFinite { record: usize },

    #[error("{extra} unexpected trailing bytes after the last record")]
    TrailingData { extra: usize },

    #[error("malformed trace at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::BadMagic { .. } => "bad-magic",
            TraceError::VersionMismatch { .. } => "version-mismatch",
            TraceError::TruncatedHeader => "truncated-header",
            TraceError::Truncated { .. } => "truncated",
            TraceError::ShapeMismatch { .. } => "shape-mismatch",
            TraceError::RecordOrder { .. } => "record-order",
            TraceError::NonFinite { .. } => "non-finite",
            TraceError::TrailingData { .. } => "trailing-data",
            TraceError::Malformed { .. } => "malformed",
        }
    }
}
