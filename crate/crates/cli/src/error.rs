use std::process::ExitCode;

use memelens_review::ReviewError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation or configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Input data failed validation (exit 2).
    #[error("{0}")]
    Data(String),
    /// The computation or the environment failed (exit 3).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

impl From<memelens_core::Error> for CliError {
    fn from(e: memelens_core::Error) -> Self {
        match e {
            memelens_core::Error::InvalidParams(_) => CliError::Usage(e.to_string()),
            e if e.is_data_error() => CliError::Data(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ReviewError> for CliError {
    fn from(e: ReviewError) -> Self {
        match e {
            ReviewError::BadRequest(_) => CliError::Usage(e.to_string()),
            ReviewError::CorruptLog(_) => CliError::Data(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
