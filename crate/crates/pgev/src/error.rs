use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or parameter value (non-finite input, sigma <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input data, reported with the offending 1-based line number.
    #[error("ingest error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    /// Optimizer could not produce a usable solution.
    #[error("optimization failed: {0}")]
    Optim(String),

    /// Covariance matrix could not be factorized even after jitter.
    #[error("linear algebra error: {0}")]
    LinAlg(String),

    /// Inconsistent pipeline inputs (mismatched year axes, missing stages, ...).
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
