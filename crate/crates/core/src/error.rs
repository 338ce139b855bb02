use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or structural setting is out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array dimensions do not chain.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Non-finite values showed up in activations, losses or gradients.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An operation was called outside its domain (empty input, zero probability, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    /// The loss oracle refused a query or failed.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// A training member (forest) failed; carries the member index.
    #[error("forest member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
