use std::path::PathBuf;

use lqconic_core::model::ValidationError;
use thiserror::Error;

/// Everything that ends a command with exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: serde_path_to_error::Error<serde_json::Error>,
    },
    /// A document that parsed but is malformed; the message starts with the
    /// offending field path.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Analysis(lqconic_core::Error),
    #[error(
        "system hash mismatch: result was computed for {recorded}, problem hashes to {computed}"
    )]
    HashMismatch { recorded: String, computed: String },
}

impl From<lqconic_core::Error> for CliError {
    fn from(e: lqconic_core::Error) -> Self {
        match e {
            lqconic_core::Error::Validation(v) => CliError::Validation(v),
            other => CliError::Analysis(other),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}
