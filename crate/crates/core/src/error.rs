use thiserror::Error;

/// Errors raised by model construction, solvers and encoders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative entry {value} at {location}")]
    NegativeEntry { value: f64, location: String },

    #[error("normalization violated at {location}: sum is {sum}, expected {expected}")]
    Normalization {
        location: String,
        sum: f64,
        expected: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conditioning event has zero probability: {0}")]
    ZeroProbability(String),

    #[error("definedness masks differ at (s={s}, s_end={s_end})")]
    MaskMismatch { s: usize, s_end: usize },

    #[error("inputs are inconsistent: {0}")]
    Inconsistent(String),

    #[error("grid is not connected: {0} free cells unreachable from the first free cell")]
    DisconnectedGrid(usize),

    #[error("search not applicable: {0}")]
    NotApplicable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("could not construct a counter-example after {0} attempts")]
    ConstructionFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
