use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("cannot learn target concept: no positive bags")]
    NoPositiveBags,

    #[error("no negative bags")]
    NoNegativeBags,

    #[error("zero-norm atom")]
    ZeroNorm,

    #[error("power iteration did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
