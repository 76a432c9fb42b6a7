use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("wavefunction reached the edge of its window (capacity {capacity} steps)")]
    CapacityExceeded { capacity: usize },

    #[error("{name} = {value} is outside the domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("fit failed after {iterations} iterations: {reason} (residual norm {residual_norm:e})")]
    FitFailed {
        iterations: usize,
        residual_norm: f64,
        reason: String,
    },

    #[error("log-log slope never drops below {threshold}")]
    NoCrossover { threshold: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
