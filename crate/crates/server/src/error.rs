//! Error responses. Every failure leaves the service as JSON
//! `{"code": ..., "message": ...}` with a matching HTTP status.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use patchswipe_core::analytics::AgreementError;
use patchswipe_core::session::SessionError;
use patchswipe_core::IngestError;
use serde::Serialize;

use crate::auth::AuthError;
use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<&'a serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn invalid_credentials() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "invalid_credentials", "invalid or expired credentials")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        let what = what.into();
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl std::fmt::Display) -> Self {
        tracing::error!("internal error: {message}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            code: self.code,
            message: &self.message,
            details: self.details.as_ref(),
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::InvalidCredentials => Self::invalid_credentials(),
            AuthError::Forbidden => Self::forbidden("not permitted for this account"),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Duplicate(what) => Self::conflict("already_exists", format!("{what} already exists")),
            StoreError::NotFound(what) => Self::not_found(what),
            other => Self::internal(other),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::SessionClosed | SessionError::StudyClosed => Self::conflict("study_closed", msg),
            SessionError::Unassigned(_) => Self::unprocessable("unassigned_direction", msg),
            SessionError::NoOutstandingPresentation => Self::conflict("no_outstanding_presentation", msg),
            SessionError::PostponeNotConfigured => Self::unprocessable("postpone_not_configured", msg),
            SessionError::NothingToUndo => Self::conflict("nothing_to_undo", msg),
            SessionError::UndoDisabled => Self::conflict("undo_disabled", msg),
            SessionError::DecisionBeforePresentation => Self::unprocessable("decision_before_presentation", msg),
            SessionError::NotAssigned => Self::forbidden(msg),
            SessionError::Order(_) | SessionError::ReplayDivergence { .. } => Self::internal(msg),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let msg = e.to_string();
        match e {
            IngestError::EmptyInput => Self::unprocessable("empty_input", msg),
            IngestError::CorruptArchive(_) => Self::unprocessable("corrupt_archive", msg),
            IngestError::EmptyDataset => Self::unprocessable("empty_dataset", msg),
            IngestError::DuplicateFilename(_) => Self::unprocessable("duplicate_filename", msg),
            IngestError::ManifestMismatch(_) => Self::unprocessable("manifest_mismatch", msg),
            IngestError::Sink { .. } => Self::internal(msg),
        }
    }
}

impl From<AgreementError> for ApiError {
    fn from(e: AgreementError) -> Self {
        Self::unprocessable("agreement_unavailable", e.to_string())
    }
}

impl From<axum::extract::multipart::MultipartError> for ApiError {
    fn from(e: axum::extract::multipart::MultipartError) -> Self {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
        } else {
            Self::bad_request(e.body_text())
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
