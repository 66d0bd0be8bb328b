//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid scenario `{scenario_id}`: field `{field}`: {message}")]
    Validation {
        scenario_id: String,
        field: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training failed at step {step}: {message}")]
    Train { step: usize, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("store error: {0}")]
    Store(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("graph error: {0}")]
    Graph(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(
        scenario_id: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            scenario_id: scenario_id.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
