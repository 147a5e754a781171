use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde_json::json;

use tosread_core::bundle::BundleError;
use tosread_core::gateway::GatewayError;
use tosread_core::scope::ScopeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}}).to_string();
        (
            self.status,
            [(axum::http::header::CONTENT_TYPE, "application/json; charset=utf-8")],
            body,
        )
            .into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::ReplayMiss { .. } | GatewayError::NotConfigured(_) => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "gateway_unavailable", e.to_string())
            }
            GatewayError::Provider(_) => ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", e.to_string()),
            GatewayError::InvalidInput(_) | GatewayError::MissingBinding { .. } => ApiError::bad_request(e.to_string()),
            GatewayError::Cache(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<ScopeError> for ApiError {
    fn from(e: ScopeError) -> Self {
        match e {
            ScopeError::Gateway(g) => g.into(),
            ScopeError::EmptyInput(_) => ApiError::bad_request(e.to_string()),
            ScopeError::EmptyIndex | ScopeError::InvalidIndex(_) | ScopeError::DimensionMismatch { .. } => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "index_unavailable", e.to_string())
            }
            ScopeError::UnparseableCompletion(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "unparseable_completion", e.to_string())
            }
            ScopeError::UnknownChunk(_) | ScopeError::DuplicateChunk(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::NotFound(_) => ApiError::not_found(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}
