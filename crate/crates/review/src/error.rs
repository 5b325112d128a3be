use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("no meme with id \"{0}\"")]
    NotFound(String),

    #[error("meme \"{id}\" is already labeled {stored}")]
    Conflict { id: String, stored: u8 },

    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),

    #[error("{0}")]
    BadRequest(String),

    #[error("image path \"{0}\" escapes the image directory")]
    ForbiddenPath(String),

    #[error("corrupt label log: {0}")]
    CorruptLog(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl ReviewError {
    pub fn status(&self) -> StatusCode {
        match self {
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::Conflict { .. } => StatusCode::CONFLICT,
            ReviewError::InvalidLabel(_) | ReviewError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ReviewError::ForbiddenPath(_) => StatusCode::FORBIDDEN,
            ReviewError::CorruptLog(_) | ReviewError::Io { .. } | ReviewError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = match &self {
            ReviewError::Conflict { stored, .. } => json!({ "error": self.to_string(), "stored_label": stored }),
            _ => json!({ "error": self.to_string() }),
        };
        (status, Json(body)).into_response()
    }
}
