//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A discrete support exceeds the exact-solver cap.
    #[error("support size {got} exceeds the exact-solver cap {cap}")]
    SupportTooLarge { got: usize, cap: usize },

    /// Ledger rounds must be recorded in order 1..T.
    #[error("round recorded out of order: expected {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },

    /// Relative regret divides by the first-round regret.
    #[error("first-round regret is zero; relative regret is undefined")]
    ZeroFirstRoundRegret,

    /// An iterate or objective left the finite range the solver tolerates.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A step size lies outside the validity range of a bound.
    #[error("step size {gamma} outside required range {range}")]
    StepOutOfRange { gamma: f64, range: String },

    /// File I/O, annotated with the offending path.
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed configuration file or value.
    #[error("config: {0}")]
    Config(String),

    /// An internal invariant failed; indicates a bug, not bad input.
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
