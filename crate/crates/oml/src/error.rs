//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition (bad dimension,
    /// nonpositive step size, negative noise scale, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Experiment configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Vector lengths disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A NaN or infinity showed up where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An operation that needs at least one buffered task was called on an
    /// empty window.
    #[error("window buffer is empty")]
    EmptyWindow,

    /// Ledger rounds must be recorded consecutively starting at 1.
    #[error("out-of-order round: expected {expected}, got {got}")]
    OutOfOrderRound { expected: usize, got: usize },

    /// A trace, stream, or summary file does not match the expected schema.
    #[error("bad input data: {0}")]
    BadInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

/// Shorthand used by validation code: `ensure!(cond, "message {}", x)`.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err($crate::error::Error::InvalidParameter(format!($($arg)*)));
        }
    };
}
pub(crate) use ensure;
