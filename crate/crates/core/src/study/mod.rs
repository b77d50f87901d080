//! Training-study protocol: counterbalanced role orders, the session phase
//! machine, on-disk study storage, and pre/post cohort analysis.

mod cohort;
mod latin;
mod store;

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::ConversationHistory;
use crate::instruments::InstrumentError;
use crate::persona::RoleId;
use crate::stats::StatsError;

pub use cohort::{cohort_pre_post, CohortAnalysis};
pub use latin::{latin_square_orders, row_for_enrollment};
pub use store::{
    ParticipantRecord, QuestionnaireEntry, QuestionnairePhase, RegistryEntry, StudyStore,
};

/// Sessions per participant (one per role).
pub const SESSIONS_PER_PARTICIPANT: u8 = 3;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("wrong phase: cannot {action} while session is {phase}")]
    WrongPhase { action: &'static str, phase: Phase },
    #[error("session index {0} out of range (1..=3)")]
    InvalidSessionIndex(u8),
    #[error("user role {0} is not a role of this session")]
    UnknownUserRole(RoleId),
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("already registered: {0}")]
    AlreadyRegistered(ParticipantId),
    #[error("unknown participant: {0}")]
    UnknownParticipant(ParticipantId),
    #[error("invalid participant id {0:?}")]
    InvalidParticipantId(String),
    #[error("invalid role order: {0}")]
    InvalidRoleOrder(String),
    #[error("duplicate questionnaire response: session {session_index} {phase} {instrument_id}")]
    DuplicateResponse {
        session_index: u8,
        phase: QuestionnairePhase,
        instrument_id: String,
    },
    #[error("insufficient cohort: {included} usable participant(s), {excluded} excluded")]
    InsufficientCohort { included: usize, excluded: usize },
    #[error("corrupt study record in {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Participant identifier; restricted to characters safe in a directory name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParticipantId(String);

impl ParticipantId {
    pub fn new(id: impl Into<String>) -> Result<Self, StudyError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id.len() <= 64
            && !id.starts_with(['_', '.', '-'])
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
        if ok {
            Ok(ParticipantId(id))
        } else {
            Err(StudyError::InvalidParticipantId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ParticipantId {
    type Error = StudyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        ParticipantId::new(s)
    }
}

impl From<ParticipantId> for String {
    fn from(p: ParticipantId) -> String {
        p.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        SessionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    AwaitingUser,
    Generating,
    Ended,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::AwaitingUser => "awaiting_user",
            Phase::Generating => "generating",
            Phase::Ended => "ended",
        })
    }
}

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// One role-play session: who the human plays, the phase, and every turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: SessionId,
    pub participant_id: Option<ParticipantId>,
    pub session_index: u8,
    pub user_role: RoleId,
    /// All roles in scenario order.
    pub roles: Vec<RoleId>,
    pub phase: Phase,
    pub history: ConversationHistory,
    /// Set when the last user turn is still waiting for its avatar replies.
    pub pending: bool,
    pub started_at: Option<u64>,
    pub ended_at: Option<u64>,
}

impl SessionState {
    pub fn new(
        session_id: SessionId,
        participant_id: Option<ParticipantId>,
        session_index: u8,
        user_role: RoleId,
        roles: Vec<RoleId>,
        window: usize,
    ) -> Result<Self, SessionError> {
        if !(1..=SESSIONS_PER_PARTICIPANT).contains(&session_index) {
            return Err(SessionError::InvalidSessionIndex(session_index));
        }
        if !roles.contains(&user_role) {
            return Err(SessionError::UnknownUserRole(user_role));
        }
        Ok(SessionState {
            session_id,
            participant_id,
            session_index,
            user_role,
            roles,
            phase: Phase::Setup,
            history: ConversationHistory::new(window),
            pending: false,
            started_at: None,
            ended_at: None,
        })
    }

    /// Non-user roles in scenario order.
    pub fn avatar_roles(&self) -> Vec<RoleId> {
        self.roles
            .iter()
            .filter(|r| **r != self.user_role)
            .cloned()
            .collect()
    }

    pub fn require_phase(&self, expected: Phase, action: &'static str) -> Result<(), SessionError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(SessionError::WrongPhase {
                action,
                phase: self.phase,
            })
        }
    }

    pub fn start(&mut self, now: u64) -> Result<(), SessionError> {
        self.require_phase(Phase::Setup, "start")?;
        self.phase = Phase::AwaitingUser;
        self.started_at = Some(now);
        Ok(())
    }

    pub(crate) fn begin_generation(&mut self) -> Result<(), SessionError> {
        self.require_phase(Phase::AwaitingUser, "generate")?;
        self.phase = Phase::Generating;
        Ok(())
    }

    pub(crate) fn finish_generation(&mut self) {
        if self.phase == Phase::Generating {
            self.phase = Phase::AwaitingUser;
        }
    }

    /// Ends the session. Allowed from setup (abandoned) or while awaiting the user.
    pub fn end(&mut self, now: u64) -> Result<(), SessionError> {
        match self.phase {
            Phase::Setup | Phase::AwaitingUser => {
                self.phase = Phase::Ended;
                self.ended_at = Some(now);
                Ok(())
            }
            phase => Err(SessionError::WrongPhase { action: "end", phase }),
        }
    }

    pub fn is_ended(&self) -> bool {
        self.phase == Phase::Ended
    }
}
