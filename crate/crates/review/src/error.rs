use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown image {0}")]
    NotFound(String),
    #[error("{0}")]
    Missing(String),
    #[error("invalid request")]
    Invalid(Vec<FieldError>),
    #[error("unresolved classes: {}", .0.join(", "))]
    Unresolved(Vec<String>),
    #[error("stale revision: submitted {submitted}, current is {current}")]
    Stale { submitted: u64, current: u64 },
    #[error("missing or wrong x-api-token")]
    Unauthorized,
    #[error("storage error: {0}")]
    Storage(String),
    #[error(transparent)]
    Core(#[from] pelvimark::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) | ServiceError::Missing(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) | ServiceError::Unresolved(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Stale { .. } => StatusCode::CONFLICT,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::Config(_) | ServiceError::Storage(_) | ServiceError::Core(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "config",
            ServiceError::NotFound(_) | ServiceError::Missing(_) => "not_found",
            ServiceError::Invalid(_) => "validation",
            ServiceError::Unresolved(_) => "unresolved",
            ServiceError::Stale { .. } => "stale_revision",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::Storage(_) => "storage",
            ServiceError::Core(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        match &self {
            ServiceError::Invalid(fields) => body["fields"] = json!(fields),
            ServiceError::Unresolved(codes) => body["unresolved"] = json!(codes),
            ServiceError::Stale { current, .. } => body["current_revision"] = json!(current),
            _ => {}
        }
        if self.status().is_server_error() {
            log::error!("{self}");
        }
        (self.status(), Json(body)).into_response()
    }
}
