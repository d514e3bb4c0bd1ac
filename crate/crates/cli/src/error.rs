use std::io;

use thiserror::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config or arguments; nothing is written.
    #[error("validation error: {0}")]
    Validation(String),
    /// The computation itself failed; a `FAILED.json` marker is written.
    #[error("numerical failure: {message}")]
    Numerical { message: String, detail: serde_json::Value },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    /// A rerun disagreed with its manifest.
    #[error("reproduction mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical { .. } | CliError::Io(_) | CliError::Mismatch(_) => 3,
        }
    }

    pub fn numerical(message: impl Into<String>, detail: serde_json::Value) -> Self {
        CliError::Numerical {
            message: message.into(),
            detail,
        }
    }
}

impl From<tfelab::Error> for CliError {
    fn from(e: tfelab::Error) -> Self {
        use tfelab::Error as E;
        match e {
            E::InvalidInput(_) | E::EmptyInterval { .. } | E::InvalidSchedule(_) => CliError::Validation(e.to_string()),
            other => CliError::numerical(other.to_string(), serde_json::Value::Null),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
