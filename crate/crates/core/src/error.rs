use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported Matérn smoothness {0}; only 0.5, 1.5 and 2.5 are available")]
    UnsupportedSmoothness(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("matrix is not positive definite even after jitter retry ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("empty grid")]
    EmptyGrid,

    #[error("rounds must be consumed in order: expected round {expected}, got {got}")]
    OutOfOrderRound { expected: u64, got: u64 },

    #[error("phase {requested} requested out of order (current phase is {current})")]
    PhaseOrder {
        requested: &'static str,
        current: &'static str,
    },

    #[error("client {0} sent more than one envelope in a round")]
    DuplicateSender(usize),

    #[error("unknown client id {0}")]
    UnknownClient(usize),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
