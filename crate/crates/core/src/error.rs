use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Orthonormalization hit a (numerically) dependent column.
    #[error("degenerate basis: column {column} is numerically dependent")]
    DegenerateBasis { column: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("quantity is undefined for the zero matrix")]
    UndefinedForZero,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A non-finite value appeared; `step` is the 1-based optimizer step.
    #[error("numerical breakdown at step {step}")]
    NumericalBreakdown { step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
