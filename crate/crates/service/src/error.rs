use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use preflearn::Error;
use serde_json::{json, Value};

/// Rendered as `{code, message, details}` with the matching HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>, details: Value) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details,
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no session `{id}`"),
            json!({ "session": id }),
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_config", message, Value::Null)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_response",
            message,
            Value::Null,
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }

    /// Session creation: everything the caller sent wrong is a 400.
    pub fn config(e: Error) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string(), details(&e))
    }

    /// Answering: 409 when there is nothing (or something else) to answer,
    /// 422 when the response does not fit the pending query.
    pub fn from_answer(e: Error) -> Self {
        match e {
            Error::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", e.to_string(), Value::Null),
            Error::InvalidResponse(_)
            | Error::Arity(_)
            | Error::UnknownId(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidParameter { .. } => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_response",
                e.to_string(),
                details(&e),
            ),
            other => Self::from_core(other),
        }
    }

    pub fn from_core(e: Error) -> Self {
        Self::internal(e.to_string())
    }
}

fn details(e: &Error) -> Value {
    match e {
        Error::InvalidParameter { name, reason } => json!({ "field": name, "constraint": reason }),
        Error::UnknownName { what, name, valid } => json!({
            "field": what,
            "value": name,
            "valid": valid.split(", ").collect::<Vec<_>>(),
        }),
        Error::DimensionMismatch { expected, actual } => json!({ "expected": expected, "actual": actual }),
        _ => Value::Null,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "code": self.code,
            "message": self.message,
            "details": self.details,
        });
        (self.status, Json(body)).into_response()
    }
}
