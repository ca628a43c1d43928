use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Machine-readable error codes carried by every 4xx/5xx body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownModel,
    MalformedBody,
    UnknownSession,
    InvalidOp,
    UnknownObject,
    EditInFlight,
    BadLayer,
    NoSegmentation,
    LayoutUnavailable,
    SessionLimit,
    ExecutionFailed,
    NotFound,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 12] = [
        ErrorCode::UnknownModel,
        ErrorCode::MalformedBody,
        ErrorCode::UnknownSession,
        ErrorCode::InvalidOp,
        ErrorCode::UnknownObject,
        ErrorCode::EditInFlight,
        ErrorCode::BadLayer,
        ErrorCode::NoSegmentation,
        ErrorCode::LayoutUnavailable,
        ErrorCode::SessionLimit,
        ErrorCode::ExecutionFailed,
        ErrorCode::NotFound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownModel => "unknown_model",
            ErrorCode::MalformedBody => "malformed_body",
            ErrorCode::UnknownSession => "unknown_session",
            ErrorCode::InvalidOp => "invalid_op",
            ErrorCode::UnknownObject => "unknown_object",
            ErrorCode::EditInFlight => "edit_in_flight",
            ErrorCode::BadLayer => "bad_layer",
            ErrorCode::NoSegmentation => "no_segmentation",
            ErrorCode::LayoutUnavailable => "layout_unavailable",
            ErrorCode::SessionLimit => "session_limit",
            ErrorCode::ExecutionFailed => "execution_failed",
            ErrorCode::NotFound => "not_found",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorCode::MalformedBody, message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            ErrorCode::UnknownSession,
            format!("no session `{id}`"),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            ErrorCode::ExecutionFailed,
            message,
        )
    }
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    code: ErrorCode,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: Detail {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

/// Maps an edit failure onto the documented status and code.
pub(crate) fn from_edit_error(e: logan_core::Error) -> ApiError {
    use logan_core::Error;
    match e {
        Error::UnknownObject(id) => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::UnknownObject,
            format!("unknown object `{id}`"),
        ),
        Error::Parse { pointer, message } if pointer.starts_with("/base/segmentation") => {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorCode::NoSegmentation,
                message,
            )
        }
        Error::Parse { pointer, message } => {
            let field = pointer.strip_prefix("/edits/0").unwrap_or(&pointer);
            let at = if field.is_empty() { "/" } else { field };
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorCode::InvalidOp,
                format!("{at}: {message}"),
            )
        }
        other => ApiError::internal(other.to_string()),
    }
}
