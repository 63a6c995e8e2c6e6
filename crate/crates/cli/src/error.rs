use std::process::ExitCode;

use gvqa_core::Error as CoreError;
use thiserror::Error;

/// Failures surfaced by a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input, schema violation or invalid configuration (exit 2).
    #[error("{0}")]
    Input(String),
    /// Scoring, client or I/O failure while running (exit 3).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Client(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
