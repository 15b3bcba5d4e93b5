use thiserror::Error;

/// Errors raised by the sampling, calculus and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. a nonpositive mass).
    #[error("domain error: {0}")]
    Domain(String),
    /// The model, space or experiment configuration cannot be used as given.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical procedure failed to reach its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
