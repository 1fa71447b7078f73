//! Crate-wide error type with exit-code mapping for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {field}: {message}")]
    Validation { field: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("syntax error at token {token_index}: expected {expected}, found {found}")]
    SpSyntax {
        token_index: usize,
        expected: String,
        found: String,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// CLI exit code: config=2, validation=3, transport=4, everything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Validation { .. } | Error::Catalog(_) | Error::Input(_) => 3,
            Error::Transport(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
