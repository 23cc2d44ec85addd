use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent inputs, e.g. a field and a table built on different grids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A singular integral failed to converge.
    #[error("divergent integral: {0}")]
    Divergent(String),

    /// The adaptive time step collapsed below the configured floor.
    #[error("time step underflow at time {time}: dt = {dt:e}")]
    DtUnderflow { time: f64, dt: f64 },

    /// Malformed serialized input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
