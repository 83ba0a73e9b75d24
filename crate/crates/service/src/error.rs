use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use storymap_agents::geocoder::GeocodeError;
use storymap_agents::llm::LlmError;
use storymap_agents::{BreakdownError, CompileError, ResearchError};
use storymap_core::EditError;

use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    InvalidInput,
    AgentFailed,
    GeocodeFailed,
    Conflict,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::InvalidInput => StatusCode::BAD_REQUEST,
            ErrorCode::AgentFailed | ErrorCode::GeocodeFailed => StatusCode::BAD_GATEWAY,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InvalidInput, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!(message = %self.message, "internal error");
        }
        crate::api::canonical(self.code.status(), &self)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::NotFound(_) => ErrorCode::NotFound,
            StoreError::InvalidId(_) => ErrorCode::InvalidInput,
            StoreError::Conflict { .. } | StoreError::Exists(_) => ErrorCode::Conflict,
            StoreError::Corrupt { .. } | StoreError::Io(_) => ErrorCode::Internal,
        };
        let detail = match &e {
            StoreError::Conflict { current, .. } => json!({ "revision": current }),
            _ => Value::Null,
        };
        ApiError::new(code, e.to_string()).with_detail(detail)
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        let detail = match e.raw() {
            Some(raw) => json!({ "raw": raw }),
            None => Value::Null,
        };
        ApiError::new(ErrorCode::AgentFailed, e.to_string()).with_detail(detail)
    }
}

impl From<GeocodeError> for ApiError {
    fn from(e: GeocodeError) -> Self {
        ApiError::new(ErrorCode::GeocodeFailed, e.to_string())
    }
}

impl From<BreakdownError> for ApiError {
    fn from(e: BreakdownError) -> Self {
        match e {
            BreakdownError::EmptyScript | BreakdownError::Options(_) | BreakdownError::Edit(_) => {
                ApiError::invalid(e.to_string())
            }
            BreakdownError::Failed { message, raw } => {
                ApiError::new(ErrorCode::AgentFailed, format!("breakdown failed: {message}"))
                    .with_detail(json!({ "raw": raw }))
            }
            BreakdownError::Llm(e) => e.into(),
        }
    }
}

impl From<ResearchError> for ApiError {
    fn from(e: ResearchError) -> Self {
        match e {
            ResearchError::EmptyMessage => ApiError::invalid(e.to_string()),
            ResearchError::ActionFailed(_) => ApiError::new(ErrorCode::AgentFailed, e.to_string()),
            ResearchError::Llm(e) => e.into(),
            ResearchError::Geocode(e) => e.into(),
        }
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Invalid(_) => ApiError::new(ErrorCode::Internal, e.to_string()),
            _ => ApiError::invalid(e.to_string()),
        }
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        match e {
            EditError::NotFound(_) => ApiError::not_found(e.to_string()),
            EditError::Invariant(_) => ApiError::invalid(e.to_string()),
        }
    }
}
