use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("tree exceeded the cap of {max_nodes} nodes")]
    Truncated { max_nodes: usize },

    #[error("tree does not match the design: {0}")]
    Consistency(String),

    #[error("design has {n} points, need at least {needed} for {rounds} rounds")]
    Capacity { n: usize, needed: usize, rounds: usize },

    #[error("no valid median split in cell {node} along coordinate {var}")]
    Degenerate { node: usize, var: usize },

    #[error("more than {limit} trees to enumerate")]
    EnumerationLimit { limit: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
