use std::convert::Infallible;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::Next;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use roleswitch::dialogue::DialogueTurn;
use roleswitch::instruments::{score_response, Instrument, ResponseSet, SubscaleScores};
use roleswitch::persona::{BehaviorVocabulary, RoleBasics, RoleCard, RoleId, TaskSpec};
use roleswitch::study::{
    ParticipantId, ParticipantRecord, Phase, QuestionnairePhase, SessionId, SessionState,
    SESSIONS_PER_PARTICIPANT,
};
use roleswitch::validation::{FidelityReport, ValidationRun};

use crate::error::ApiError;
use crate::state::{ops, SessionEvent, SessionHandle, SharedState};

type ApiResult<T> = Result<T, ApiError>;

/// Client view of a session; everything comes from [`SessionState`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ApiSessionView {
    pub session_id: SessionId,
    pub participant_id: Option<ParticipantId>,
    pub session_index: u8,
    pub user_role: RoleId,
    pub phase: Phase,
    pub pending: bool,
    pub turns: Vec<DialogueTurn>,
}

impl ApiSessionView {
    pub fn from_state(s: &SessionState, since: u64) -> Self {
        ApiSessionView {
            session_id: s.session_id.clone(),
            participant_id: s.participant_id.clone(),
            session_index: s.session_index,
            user_role: s.user_role.clone(),
            phase: s.phase,
            pending: s.pending,
            turns: s.history.since(since).to_vec(),
        }
    }
}

/// Returned on session creation: the user's own card in full and only the
/// basic information of the other roles.
#[derive(Debug, Clone, Serialize)]
pub struct SessionDescriptor {
    pub session: ApiSessionView,
    pub user_card: RoleCard,
    pub others: Vec<RoleBasics>,
    pub task: TaskSpec,
    pub session_minutes: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioView {
    pub name: String,
    pub task: TaskSpec,
    pub vocabulary: BehaviorVocabulary,
    pub roles: Vec<RoleBasics>,
    pub session_minutes: u32,
}

pub async fn require_token(State(app): State<SharedState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.config.auth_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token);
        if !ok {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub async fn roles(State(app): State<SharedState>) -> Json<Vec<RoleBasics>> {
    Json(app.scenario().roles.iter().map(RoleCard::basics).collect())
}

pub async fn scenario(State(app): State<SharedState>) -> Json<ScenarioView> {
    let s = app.scenario();
    Json(ScenarioView {
        name: s.name.clone(),
        task: s.task.clone(),
        vocabulary: s.vocabulary.clone(),
        roles: s.roles.iter().map(RoleCard::basics).collect(),
        session_minutes: s.session_minutes,
    })
}

#[derive(Debug, Default, Deserialize)]
pub struct CreateSession {
    pub participant_id: Option<String>,
    pub session_index: Option<u8>,
    pub role: Option<String>,
}

fn descriptor(app: &SharedState, state: &SessionState) -> SessionDescriptor {
    let scenario = app.scenario();
    let user_card = scenario
        .role(&state.user_role)
        .expect("session role belongs to scenario")
        .clone();
    SessionDescriptor {
        session: ApiSessionView::from_state(state, 0),
        others: scenario
            .avatar_roles(&state.user_role)
            .into_iter()
            .map(RoleCard::basics)
            .collect(),
        user_card,
        task: scenario.task.clone(),
        session_minutes: scenario.session_minutes,
    }
}

pub async fn create_session(
    State(app): State<SharedState>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionDescriptor>)> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let scenario = app.scenario().clone();
    let explicit_role = match &body.role {
        Some(r) => Some(
            scenario
                .resolve_role(r)
                .map(|c| c.role_id.clone())
                .ok_or_else(|| ApiError::UnknownRole(RoleId::new(r.as_str())))?,
        ),
        None => None,
    };
    let (participant, index, role) = match &body.participant_id {
        Some(raw) => {
            let pid = ParticipantId::new(raw.as_str())?;
            let app2 = app.clone();
            let pid2 = pid.clone();
            let record = tokio::task::spawn_blocking(move || app2.config.store.participant(&pid2))
                .await
                .map_err(|e| ApiError::Internal(e.to_string()))??;
            let index = match body.session_index {
                Some(i) => i,
                None => (1..=SESSIONS_PER_PARTICIPANT)
                    .find(|i| !record.completed_sessions.contains(i))
                    .ok_or_else(|| ApiError::Conflict(format!("{pid} has completed every session")))?,
            };
            let assigned = record
                .role_for_session(index)
                .cloned()
                .ok_or(roleswitch::study::SessionError::InvalidSessionIndex(index))?;
            if let Some(r) = &explicit_role {
                if r != &assigned {
                    return Err(ApiError::Invalid(format!(
                        "{pid} is assigned {assigned} for session {index}, not {r}"
                    )));
                }
            }
            (Some(pid), index, assigned)
        }
        None => {
            let role = explicit_role
                .ok_or_else(|| ApiError::Invalid("either participant_id or role is required".into()))?;
            (None, body.session_index.unwrap_or(1), role)
        }
    };
    let app2 = app.clone();
    let (handle, created) =
        tokio::task::spawn_blocking(move || app2.create_session(participant, index, role))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(descriptor(&app, &handle.snapshot()))))
}

#[derive(Debug, Default, Deserialize)]
pub struct Since {
    #[serde(default)]
    pub since: u64,
}

pub async fn get_session(
    State(app): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<Json<ApiSessionView>> {
    let handle = app.session(&SessionId::new(id))?;
    Ok(Json(ApiSessionView::from_state(&handle.snapshot(), q.since)))
}

pub async fn get_turns(
    State(app): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<Json<Vec<DialogueTurn>>> {
    let handle = app.session(&SessionId::new(id))?;
    Ok(Json(handle.snapshot().history.since(q.since).to_vec()))
}

/// Runs `f` on the blocking pool while holding the session's writer.
async fn with_writer<T, F>(app: &SharedState, id: String, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SharedState, &SessionHandle, &mut crate::state::Live) -> ApiResult<T> + Send + 'static,
{
    let handle = app.session(&SessionId::new(id))?;
    let mut guard = handle.try_writer()?;
    let app = app.clone();
    tokio::task::spawn_blocking(move || f(&app, &handle, &mut guard))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

pub async fn start_session(State(app): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<ApiSessionView>> {
    with_writer(&app, id, |_, h, live| {
        ops::start(h, live)?;
        Ok(Json(ApiSessionView::from_state(&live.state, 0)))
    })
    .await
}

pub async fn end_session(State(app): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<ApiSessionView>> {
    with_writer(&app, id, |app, h, live| {
        ops::end(h, live, &app.config.store)?;
        Ok(Json(ApiSessionView::from_state(&live.state, 0)))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct UtteranceBody {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundReply {
    pub turns: Vec<DialogueTurn>,
}

pub async fn utterance(
    State(app): State<SharedState>,
    Path(id): Path<String>,
    Json(body): Json<UtteranceBody>,
) -> ApiResult<Json<RoundReply>> {
    with_writer(&app, id, move |app, h, live| {
        ops::accept(h, live, &app.config.engine, &body.text)?;
        let turns = ops::generate(h, live, &app.config.engine)?;
        Ok(Json(RoundReply { turns }))
    })
    .await
}

pub async fn retry(State(app): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<RoundReply>> {
    with_writer(&app, id, |app, h, live| {
        let turns = ops::generate(h, live, &app.config.engine)?;
        Ok(Json(RoundReply { turns }))
    })
    .await
}

fn sse_event(e: &SessionEvent) -> Event {
    let data = serde_json::to_string(e).expect("event serializes");
    let ev = Event::default().event(e.name()).data(data);
    match e {
        SessionEvent::Turn { turn } => ev.id(turn.seq.to_string()),
        _ => ev,
    }
}

/// Server-sent events: turns after `since` first, then live events.
pub async fn events(
    State(app): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let handle = app.session(&SessionId::new(id))?;
    let rx = handle.subscribe();
    let snap = handle.snapshot();
    let replayed = snap.history.last().map_or(0, |t| t.seq).max(q.since);
    let backlog: Vec<SessionEvent> = snap
        .history
        .since(q.since)
        .iter()
        .map(|t| SessionEvent::Turn { turn: t.clone() })
        .chain(std::iter::once(SessionEvent::Phase { phase: snap.phase }))
        .collect();
    let live = stream::unfold(rx, move |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(SessionEvent::Turn { turn }) if turn.seq <= replayed => continue,
                Ok(ev) => return Some((ev, rx)),
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    let out = stream::iter(backlog)
        .chain(live)
        .map(|e| Ok::<_, Infallible>(sse_event(&e)));
    Ok(Sse::new(out).keep_alive(KeepAlive::default()))
}

fn instrument(app: &SharedState, id: &str) -> ApiResult<Instrument> {
    app.config
        .instruments
        .iter()
        .find(|i| i.instrument_id == id)
        .cloned()
        .ok_or_else(|| roleswitch::instruments::InstrumentError::UnknownInstrument(id.to_string()).into())
}

pub async fn get_instrument(State(app): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<Instrument>> {
    Ok(Json(instrument(&app, &id)?))
}

#[derive(Debug, Deserialize)]
pub struct QuestionnaireBody {
    pub participant_id: Option<String>,
    pub session_index: Option<u8>,
    pub phase: Option<QuestionnairePhase>,
    pub respondent_id: Option<String>,
    pub answers: std::collections::BTreeMap<String, i32>,
}

#[derive(Debug, Serialize)]
pub struct QuestionnaireReply {
    pub instrument_id: String,
    pub scores: SubscaleScores,
    pub stored: bool,
}

pub async fn post_questionnaire(
    State(app): State<SharedState>,
    Path(id): Path<String>,
    Json(body): Json<QuestionnaireBody>,
) -> ApiResult<(StatusCode, Json<QuestionnaireReply>)> {
    let inst = instrument(&app, &id)?;
    let response = ResponseSet {
        instrument_id: inst.instrument_id.clone(),
        respondent_id: body
            .respondent_id
            .or_else(|| body.participant_id.clone())
            .unwrap_or_else(|| "anonymous".into()),
        answers: body.answers,
    };
    let scores = score_response(&inst, &response)?;
    let stored = match body.participant_id {
        None => false,
        Some(raw) => {
            let pid = ParticipantId::new(raw)?;
            let (index, phase) = match (body.session_index, body.phase) {
                (Some(i), Some(p)) => (i, p),
                _ => {
                    return Err(ApiError::Invalid(
                        "session_index and phase are required with participant_id".into(),
                    ))
                }
            };
            let app2 = app.clone();
            tokio::task::spawn_blocking(move || {
                app2.config.store.record_response(&pid, index, phase, &inst, response)
            })
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
            true
        }
    };
    let status = if stored { StatusCode::CREATED } else { StatusCode::OK };
    Ok((
        status,
        Json(QuestionnaireReply {
            instrument_id: id,
            scores,
            stored,
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct AssignBody {
    pub participant_id: String,
}

pub async fn assign(
    State(app): State<SharedState>,
    Json(body): Json<AssignBody>,
) -> ApiResult<(StatusCode, Json<ParticipantRecord>)> {
    let pid = ParticipantId::new(body.participant_id)?;
    let roles = app.scenario().role_ids();
    let app2 = app.clone();
    let record = tokio::task::spawn_blocking(move || app2.config.store.assign_participant(&pid, &roles))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(record)))
}

pub async fn participant(
    State(app): State<SharedState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ParticipantRecord>> {
    let pid = ParticipantId::new(id)?;
    let app2 = app.clone();
    let record = tokio::task::spawn_blocking(move || app2.config.store.participant(&pid))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(record))
}

pub async fn validation_reports(State(app): State<SharedState>) -> ApiResult<Json<Vec<FidelityReport>>> {
    let path = app.config.reports_path.clone();
    let text = match tokio::fs::read_to_string(&path).await {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Json(Vec::new())),
        Err(e) => return Err(ApiError::Internal(format!("{}: {e}", path.display()))),
    };
    let run: ValidationRun = serde_json::from_str(&text)
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
    Ok(Json(run.reports))
}

pub async fn health(State(app): State<SharedState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok", "sessions": app.session_count()}))
}
