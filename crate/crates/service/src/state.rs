use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::Serialize;
use tokio::sync::{broadcast, Mutex, OwnedMutexGuard};

use roleswitch::dialogue::{read_transcript, replay_transcript, DialogueEngine, DialogueTurn, TranscriptWriter};
use roleswitch::instruments::Instrument;
use roleswitch::persona::{RoleId, Scenario};
use roleswitch::study::{now_ms, ParticipantId, Phase, SessionId, SessionState, StudyStore};

use crate::error::ApiError;

/// Pushed to `/sessions/{id}/events` subscribers.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Turn { turn: DialogueTurn },
    Phase { phase: Phase },
    Pending { pending: bool },
    RoundFailed { error: String, retry: bool },
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SessionEvent::Turn { .. } => "turn",
            SessionEvent::Phase { .. } => "phase",
            SessionEvent::Pending { .. } => "pending",
            SessionEvent::RoundFailed { .. } => "round_failed",
        }
    }
}

pub(crate) struct Live {
    pub state: SessionState,
    pub transcript: TranscriptWriter,
}

/// One session: a single writer behind an async mutex, and a snapshot that
/// readers clone without waiting for generation to finish.
pub struct SessionHandle {
    live: Arc<Mutex<Live>>,
    snapshot: RwLock<SessionState>,
    events: broadcast::Sender<SessionEvent>,
}

impl SessionHandle {
    fn new(state: SessionState, transcript: TranscriptWriter) -> Self {
        let (events, _) = broadcast::channel(256);
        SessionHandle {
            snapshot: RwLock::new(state.clone()),
            live: Arc::new(Mutex::new(Live { state, transcript })),
            events,
        }
    }

    pub fn snapshot(&self) -> SessionState {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SessionEvent> {
        self.events.subscribe()
    }

    pub(crate) fn publish(&self, state: &SessionState) {
        *self.snapshot.write().expect("snapshot lock") = state.clone();
    }

    pub(crate) fn emit(&self, event: SessionEvent) {
        // No subscribers is fine.
        let _ = self.events.send(event);
    }

    /// The writer lock, or `Busy` when another request holds it.
    pub(crate) fn try_writer(&self) -> Result<OwnedMutexGuard<Live>, ApiError> {
        self.live.clone().try_lock_owned().map_err(|_| ApiError::Busy)
    }
}

/// Everything the routes need.
pub struct ServiceConfig {
    pub engine: DialogueEngine,
    pub store: Arc<StudyStore>,
    pub instruments: Vec<Instrument>,
    /// Validation run written by the harness; absent means no reports yet.
    pub reports_path: PathBuf,
    pub auth_token: Option<String>,
    /// Origins allowed by CORS; empty allows any.
    pub cors_origins: Vec<String>,
}

pub struct AppState {
    pub config: ServiceConfig,
    sessions: RwLock<HashMap<SessionId, Arc<SessionHandle>>>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Builds the state and reloads every transcript in the store.
    pub fn load(config: ServiceConfig) -> Result<SharedState, ApiError> {
        let mut sessions = HashMap::new();
        for path in config.store.transcript_paths()? {
            let records = read_transcript(&path)?;
            let state = replay_transcript(&records)?;
            let writer = TranscriptWriter::open_append(&path, &state)?;
            sessions.insert(state.session_id.clone(), Arc::new(SessionHandle::new(state, writer)));
        }
        Ok(Arc::new(AppState {
            config,
            sessions: RwLock::new(sessions),
        }))
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        self.config.engine.scenario()
    }

    pub fn session(&self, id: &SessionId) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.clone()))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }

    fn find_participant_session(&self, pid: &ParticipantId, index: u8) -> Option<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("session map")
            .values()
            .find(|h| {
                let s = h.snapshot.read().expect("snapshot lock");
                s.participant_id.as_ref() == Some(pid) && s.session_index == index
            })
            .cloned()
    }

    /// Creates a session in `setup`, or returns the open one for the same
    /// participant and session index.
    pub fn create_session(
        &self,
        participant: Option<ParticipantId>,
        session_index: u8,
        user_role: RoleId,
    ) -> Result<(Arc<SessionHandle>, bool), ApiError> {
        if let Some(pid) = &participant {
            if let Some(existing) = self.find_participant_session(pid, session_index) {
                if existing.snapshot().is_ended() {
                    return Err(ApiError::Conflict(format!(
                        "session {session_index} of {pid} has already ended"
                    )));
                }
                return Ok((existing, false));
            }
        }
        let id = SessionId::new(uuid::Uuid::new_v4().simple().to_string());
        let state = self
            .config
            .engine
            .new_session(id.clone(), participant.clone(), session_index, user_role)?;
        let path = self
            .config
            .store
            .transcript_path(participant.as_ref(), session_index, &id);
        let writer = TranscriptWriter::create(path, &state)?;
        let handle = Arc::new(SessionHandle::new(state, writer));
        self.sessions
            .write()
            .expect("session map")
            .insert(id, handle.clone());
        Ok((handle, true))
    }
}

/// Blocking session operations; run on the blocking pool with the writer held.
pub(crate) mod ops {
    use super::*;

    fn phase_changed(handle: &SessionHandle, live: &mut Live) -> Result<(), ApiError> {
        live.transcript.sync(&live.state)?;
        handle.publish(&live.state);
        handle.emit(SessionEvent::Phase {
            phase: live.state.phase,
        });
        Ok(())
    }

    pub fn start(handle: &SessionHandle, live: &mut Live) -> Result<(), ApiError> {
        live.state.start(now_ms())?;
        phase_changed(handle, live)
    }

    pub fn end(handle: &SessionHandle, live: &mut Live, store: &StudyStore) -> Result<(), ApiError> {
        live.state.end(now_ms())?;
        phase_changed(handle, live)?;
        if let Some(pid) = &live.state.participant_id {
            store.mark_completed(
                pid,
                live.state.session_index,
                &live.state.session_id,
                live.state.ended_at.unwrap_or(0),
            )?;
        }
        Ok(())
    }

    pub fn accept(
        handle: &SessionHandle,
        live: &mut Live,
        engine: &DialogueEngine,
        text: &str,
    ) -> Result<(), ApiError> {
        let turn = engine.accept_user_turn(&mut live.state, text)?;
        live.transcript.sync(&live.state)?;
        handle.publish(&live.state);
        handle.emit(SessionEvent::Turn { turn });
        handle.emit(SessionEvent::Pending { pending: true });
        Ok(())
    }

    /// Generates the pending round. On failure the user turn is kept and a
    /// `round_failed` event tells subscribers to drop any partial replies.
    pub fn generate(
        handle: &SessionHandle,
        live: &mut Live,
        engine: &DialogueEngine,
    ) -> Result<Vec<DialogueTurn>, ApiError> {
        let mut busy = live.state.clone();
        busy.phase = Phase::Generating;
        handle.publish(&busy);
        handle.emit(SessionEvent::Phase {
            phase: Phase::Generating,
        });
        let result = engine.generate_round(&mut live.state, |turn| {
            handle.emit(SessionEvent::Turn { turn: turn.clone() })
        });
        live.transcript.sync(&live.state)?;
        handle.publish(&live.state);
        match result {
            Ok(turns) => {
                handle.emit(SessionEvent::Pending { pending: false });
                handle.emit(SessionEvent::Phase {
                    phase: live.state.phase,
                });
                Ok(turns)
            }
            Err(e) => {
                handle.emit(SessionEvent::RoundFailed {
                    error: e.to_string(),
                    retry: e.is_generation_failure(),
                });
                handle.emit(SessionEvent::Phase {
                    phase: live.state.phase,
                });
                Err(e.into())
            }
        }
    }
}
