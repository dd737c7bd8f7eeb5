use thiserror::Error;

/// Errors surfaced by oracles, solvers, and the data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (bad dimension, out-of-range parameter, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An oracle or solver produced a non-finite value, or a line search was exhausted.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Malformed input data (CSV parse errors carry row/column locations).
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
