//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps these onto process exit codes: anything data-shaped exits
/// with 2, numerical divergence exits with 3 (usage errors exit with 1 and
/// are produced by argument parsing before any of these arise).
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (bad node id, bad radii,
    /// shape mismatch, non-bijective permutation, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// SMILES (or other text) could not be parsed. `offset` is a byte offset
    /// into the input.
    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// A run configuration is unusable (e.g. negatives requested with a
    /// single-graph batch).
    #[error("configuration error: {0}")]
    Config(String),

    /// A forward pass or loss produced a non-finite value.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// ROC-AUC is undefined (single-class labels).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Dataset/file-level problems: missing columns, bad records, empty
    /// datasets, leakage-gate violations.
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint format version is not supported.
    #[error("checkpoint version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    /// Checkpoint payload hash does not match its manifest (truncation or
    /// corruption).
    #[error("checkpoint hash mismatch: expected {expected}, got {actual}")]
    HashMismatch { expected: String, actual: String },

    /// Checkpoint parameter shapes do not match the requested configuration.
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Short machine-parseable class tag used on stderr by the CLI.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Divergence(_) => "divergence",
            _ => "data",
        }
    }

    /// Process exit code for this error per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence(_) => 3,
            _ => 2,
        }
    }
}
