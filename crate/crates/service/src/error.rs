use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

use roleswitch::dialogue::DialogueError;
use roleswitch::instruments::InstrumentError;
use roleswitch::persona::RoleId;
use roleswitch::study::{SessionError, SessionId, StudyError};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session: {0}")]
    UnknownSession(SessionId),
    #[error("unknown role: {0}")]
    UnknownRole(RoleId),
    #[error("session busy: another request is being processed")]
    Busy,
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error("{0}")]
    Internal(String),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Dialogue(e.into())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    retry: Option<&'static str>,
}

fn session_status(e: &SessionError) -> (StatusCode, &'static str) {
    match e {
        SessionError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
        SessionError::InvalidSessionIndex(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_session_index"),
        SessionError::UnknownUserRole(_) => (StatusCode::NOT_FOUND, "unknown_role"),
    }
}

fn instrument_status(e: &InstrumentError) -> (StatusCode, &'static str) {
    match e {
        InstrumentError::UnknownInstrument(_) => (StatusCode::NOT_FOUND, "unknown_instrument"),
        InstrumentError::Generation(_) => (StatusCode::BAD_GATEWAY, "generation_failed"),
        InstrumentError::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_response"),
    }
}

impl ApiError {
    pub fn status(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ApiError::UnknownRole(_) => (StatusCode::NOT_FOUND, "unknown_role"),
            ApiError::Busy => (StatusCode::CONFLICT, "busy"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ApiError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request"),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            ApiError::Dialogue(e) => match e {
                _ if e.is_generation_failure() => (StatusCode::BAD_GATEWAY, "generation_failed"),
                DialogueError::EmptyUtterance => (StatusCode::UNPROCESSABLE_ENTITY, "empty_utterance"),
                DialogueError::PendingRound => (StatusCode::CONFLICT, "pending_round"),
                DialogueError::NothingToRespondTo => (StatusCode::CONFLICT, "nothing_pending"),
                DialogueError::RoundLimit(_) => (StatusCode::CONFLICT, "round_limit"),
                DialogueError::Session(s) => session_status(s),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            },
            ApiError::Study(e) => match e {
                StudyError::AlreadyRegistered(_) => (StatusCode::CONFLICT, "already_registered"),
                StudyError::UnknownParticipant(_) => (StatusCode::NOT_FOUND, "unknown_participant"),
                StudyError::InvalidParticipantId(_) | StudyError::InvalidRoleOrder(_) => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")
                }
                StudyError::DuplicateResponse { .. } => (StatusCode::CONFLICT, "duplicate_response"),
                StudyError::InsufficientCohort { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "insufficient_cohort"),
                StudyError::Session(s) => session_status(s),
                StudyError::Instrument(i) => instrument_status(i),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            },
            ApiError::Instrument(e) => instrument_status(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status();
        let retry = (code == "generation_failed" && matches!(self, ApiError::Dialogue(_)))
            .then_some("POST /sessions/{id}/retry");
        let body = ErrorBody {
            error: code,
            message: self.to_string(),
            retry,
        };
        (status, Json(body)).into_response()
    }
}
