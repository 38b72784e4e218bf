//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range data (bad boxes, confidences, configs, ...).
    #[error("invalid data: {0}")]
    Invalid(String),

    /// A metric was requested over an empty frame set.
    #[error("no evaluable frames")]
    NoEvaluableFrames,

    /// Long-term recall needs at least one visible ground-truth frame.
    #[error("recall undefined: no visible ground-truth frames")]
    RecallUndefined,

    /// Line-oriented parse failure with its location.
    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },

    /// A task or source pool is smaller than its selection quota.
    #[error("insufficient sequences for {scope}: quota {quota}, available {available}")]
    InsufficientSequences {
        scope: String,
        quota: usize,
        available: usize,
    },

    /// Non-finite values surfaced during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
