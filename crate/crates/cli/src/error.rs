use std::path::PathBuf;

use rollscan_core::Error as CoreError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Command failures, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(#[source] CoreError),

    #[error("invalid data: {0}")]
    DataMessage(String),

    #[error("I/O failure: {0}")]
    Io(#[source] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::DataMessage(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io(CoreError::Io {
            path: path.into(),
            source,
        })
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { .. } => CliError::Io(e),
            other => CliError::Data(other),
        }
    }
}
