//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the documented domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mathematically undefined evaluation (e.g. division by a vanishing
    /// set-function value).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed to converge or produced non-finite
    /// intermediate values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A run or experiment configuration violates a feasibility constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// Random structure generation failed (e.g. could not draw a connected
    /// graph within the attempt budget).
    #[error("generation error: {0}")]
    Generation(String),

    /// Data ingestion produced no usable rows.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// An optimizer state became non-finite at iteration `t`.
    #[error("divergence at iteration {t}")]
    Divergence { t: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
