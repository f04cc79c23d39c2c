use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use turkey_core::domain::DomainError;
use turkey_core::ServiceError;

/// Status code for a service error: validation 422, unknown ids 404, auth 401,
/// conflicts with current state 409.
pub fn status_for(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
        ServiceError::TaskNotFound(_) | ServiceError::UnknownSession => StatusCode::NOT_FOUND,
        ServiceError::DuplicateAssignment
        | ServiceError::SessionClosed
        | ServiceError::TaskNotPublished
        | ServiceError::Domain(DomainError::IllegalTransition { .. } | DomainError::TaskNotPublished) => {
            StatusCode::CONFLICT
        }
        ServiceError::MissingRequiredAnswer(_)
        | ServiceError::MalformedAnswer { .. }
        | ServiceError::DuplicateAnswer(_)
        | ServiceError::InvalidInput(_)
        | ServiceError::Domain(_)
        | ServiceError::Registry(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::InjectedFault(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// Error response with body `{"error": <code>, "message": <text>}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "invalid_input",
            message: message.into(),
        }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = status_for(&e);
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}
