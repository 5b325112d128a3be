use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate meme id \"{0}\"")]
    DuplicateId(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("id mismatch: record \"{record}\" paired with annotation \"{annotation}\"")]
    IdMismatch { record: String, annotation: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model has not been trained")]
    NotTrained,

    #[error("model format error: {0}")]
    Format(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    /// True for errors caused by the input data rather than by a failing
    /// computation.
    pub fn is_data_error(&self) -> bool {
        if let Error::Fold { source, .. } = self {
            return source.is_data_error();
        }
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::DuplicateId(_)
                | Error::InsufficientData(_)
                | Error::IdMismatch { .. }
                | Error::DimensionMismatch { .. }
                | Error::SingleClass
                | Error::Format(_)
        )
    }
}
