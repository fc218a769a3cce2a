use thiserror::Error;

/// Errors produced anywhere in the estimation / simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{source_name}: row {row}: {reason}")]
    Row {
        source_name: String,
        row: usize,
        reason: String,
    },

    #[error("IPF infeasible: {0}")]
    IpfInfeasible(String),

    #[error("IPF did not converge after {iterations} iterations (max marginal deviation {deviation:e})")]
    IpfNotConverged { iterations: usize, deviation: f64 },

    #[error("scenario edit #{index}: {reason}")]
    Edit { index: usize, reason: String },

    #[error("component mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
