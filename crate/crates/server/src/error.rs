use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadRequest,
    Unauthenticated,
    NotFound,
    Conflict,
    StaleView,
    KindMismatch,
    SyntaxError,
    /// Server-side failure such as an unwritable data directory. Never
    /// caused by request content.
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest | ErrorCode::KindMismatch | ErrorCode::SyntaxError => StatusCode::BAD_REQUEST,
            ErrorCode::Unauthenticated => StatusCode::UNAUTHORIZED,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict | ErrorCode::StaleView => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub detail: Value,
}

pub type ApiResult<T> = Result<T, ApiError>;

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::NotFound, message)
    }

    pub fn unauthenticated(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Unauthenticated, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Internal, message)
    }
}

impl From<pw_core::Error> for ApiError {
    fn from(e: pw_core::Error) -> Self {
        use pw_core::Error as E;
        let message = e.to_string();
        let (code, detail) = match e {
            E::Syntax { position, .. } => (ErrorCode::SyntaxError, json!({ "position": position })),
            E::KindMismatch { context, expected, found } => (
                ErrorCode::KindMismatch,
                json!({ "context": context, "expected": expected, "found": found }),
            ),
            E::StaleView { owner, built, current } => (
                ErrorCode::StaleView,
                json!({ "owner": owner, "built_generation": built, "current_generation": current }),
            ),
            E::NoViewBound(owner) => (ErrorCode::Conflict, json!({ "owner": owner })),
            E::DuplicateUser(_) => (ErrorCode::Conflict, Value::Null),
            E::Unauthenticated => (ErrorCode::Unauthenticated, Value::Null),
            E::NotFound(_) => (ErrorCode::NotFound, Value::Null),
            E::Ingest { table, row, .. } => (ErrorCode::BadRequest, json!({ "table": table, "row": row })),
            E::UnknownAttribute { table, attribute } => (
                ErrorCode::BadRequest,
                json!({ "table": table, "attribute": attribute }),
            ),
            E::Io { .. } => (ErrorCode::Internal, Value::Null),
            _ => (ErrorCode::BadRequest, Value::Null),
        };
        ApiError { code, message, detail }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
