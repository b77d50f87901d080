//! Directory-backed study storage.
//!
//! ```text
//! {root}/registry.jsonl
//! {root}/{participant}/sessions.jsonl
//! {root}/{participant}/session-{n}/transcript.jsonl
//! {root}/{participant}/session-{n}/responses.jsonl
//! {root}/_sessions/{session_id}/transcript.jsonl
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{latin_square_orders, row_for_enrollment, ParticipantId, SessionId, StudyError};
use crate::instruments::{score_response, Instrument, ResponseSet};
use crate::persona::RoleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionnairePhase {
    Pre,
    Post,
}

impl fmt::Display for QuestionnairePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionnairePhase::Pre => "pre",
            QuestionnairePhase::Post => "post",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub participant_id: ParticipantId,
    pub enrollment_index: usize,
    pub role_order: Vec<RoleId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireEntry {
    pub session_index: u8,
    pub phase: QuestionnairePhase,
    pub response: ResponseSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: ParticipantId,
    pub enrollment_index: usize,
    pub role_order: Vec<RoleId>,
    pub completed_sessions: BTreeSet<u8>,
    pub questionnaire_responses: Vec<QuestionnaireEntry>,
}

impl ParticipantRecord {
    /// The role this participant plays in session `session_index` (1-based).
    pub fn role_for_session(&self, session_index: u8) -> Option<&RoleId> {
        (session_index as usize)
            .checked_sub(1)
            .and_then(|i| self.role_order.get(i))
    }

    pub fn response(
        &self,
        session_index: u8,
        phase: QuestionnairePhase,
        instrument_id: &str,
    ) -> Option<&ResponseSet> {
        self.questionnaire_responses
            .iter()
            .find(|q| {
                q.session_index == session_index
                    && q.phase == phase
                    && q.response.instrument_id == instrument_id
            })
            .map(|q| &q.response)
    }
}

#[derive(Serialize, Deserialize)]
struct ResponseLine {
    phase: QuestionnairePhase,
    response: ResponseSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CompletionLine {
    session_index: u8,
    session_id: SessionId,
    ended_at: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StudyError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StudyError::Corrupt {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<(), StudyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(line.as_bytes()).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<(), StudyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut body = String::new();
    for v in values {
        body.push_str(&serde_json::to_string(v).expect("record serializes"));
        body.push('\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Study data rooted at one directory. Registry and response mutations are
/// serialized through an internal lock.
#[derive(Debug)]
pub struct StudyStore {
    root: PathBuf,
    lock: Mutex<()>,
}

impl StudyStore {
    pub const ADHOC_DIR: &'static str = "_sessions";

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StudyError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(StudyStore {
            root,
            lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn registry_path(&self) -> PathBuf {
        self.root.join("registry.jsonl")
    }

    fn participant_dir(&self, pid: &ParticipantId) -> PathBuf {
        self.root.join(pid.as_str())
    }

    fn completions_path(&self, pid: &ParticipantId) -> PathBuf {
        self.participant_dir(pid).join("sessions.jsonl")
    }

    pub fn participant_session_dir(&self, pid: &ParticipantId, session_index: u8) -> PathBuf {
        self.participant_dir(pid).join(format!("session-{session_index}"))
    }

    fn responses_path(&self, pid: &ParticipantId, session_index: u8) -> PathBuf {
        self.participant_session_dir(pid, session_index)
            .join("responses.jsonl")
    }

    /// Where a session's transcript lives.
    pub fn transcript_path(
        &self,
        participant: Option<&ParticipantId>,
        session_index: u8,
        session_id: &SessionId,
    ) -> PathBuf {
        match participant {
            Some(pid) => self
                .participant_session_dir(pid, session_index)
                .join("transcript.jsonl"),
            None => self
                .root
                .join(Self::ADHOC_DIR)
                .join(session_id.as_str())
                .join("transcript.jsonl"),
        }
    }

    /// Every transcript file under the store, participants first.
    pub fn transcript_paths(&self) -> Result<Vec<PathBuf>, StudyError> {
        let mut out = Vec::new();
        for entry in self.registry()? {
            for n in 1..=super::SESSIONS_PER_PARTICIPANT {
                let p = self.transcript_path(Some(&entry.participant_id), n, &SessionId::new(""));
                if p.exists() {
                    out.push(p);
                }
            }
        }
        let adhoc = self.root.join(Self::ADHOC_DIR);
        if adhoc.is_dir() {
            let mut dirs: Vec<PathBuf> = fs::read_dir(&adhoc)
                .map_err(io_err(&adhoc))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            dirs.sort();
            out.extend(
                dirs.into_iter()
                    .map(|d| d.join("transcript.jsonl"))
                    .filter(|p| p.exists()),
            );
        }
        Ok(out)
    }

    pub fn registry(&self) -> Result<Vec<RegistryEntry>, StudyError> {
        read_jsonl(&self.registry_path())
    }

    fn registry_entry(&self, pid: &ParticipantId) -> Result<RegistryEntry, StudyError> {
        self.registry()?
            .into_iter()
            .find(|e| &e.participant_id == pid)
            .ok_or_else(|| StudyError::UnknownParticipant(pid.clone()))
    }

    /// Enrolls a participant; the role order is Latin-square row
    /// `enrollment_index mod k` over `roles`.
    pub fn assign_participant(
        &self,
        pid: &ParticipantId,
        roles: &[RoleId],
    ) -> Result<ParticipantRecord, StudyError> {
        check_permutation(roles, roles)?;
        let _guard = self.lock.lock().expect("study lock");
        let registry = self.registry()?;
        if registry.iter().any(|e| &e.participant_id == pid) {
            return Err(StudyError::AlreadyRegistered(pid.clone()));
        }
        let enrollment_index = registry.len();
        let rows = latin_square_orders(roles);
        let entry = RegistryEntry {
            participant_id: pid.clone(),
            enrollment_index,
            role_order: rows[row_for_enrollment(enrollment_index, roles.len())].clone(),
        };
        append_jsonl(&self.registry_path(), &entry)?;
        fs::create_dir_all(self.participant_dir(pid)).map_err(io_err(&self.participant_dir(pid)))?;
        Ok(ParticipantRecord {
            participant_id: entry.participant_id,
            enrollment_index,
            role_order: entry.role_order,
            completed_sessions: BTreeSet::new(),
            questionnaire_responses: Vec::new(),
        })
    }

    pub fn participant(&self, pid: &ParticipantId) -> Result<ParticipantRecord, StudyError> {
        let entry = self.registry_entry(pid)?;
        let completions: Vec<CompletionLine> = read_jsonl(&self.completions_path(pid))?;
        let mut questionnaire_responses = Vec::new();
        for n in 1..=super::SESSIONS_PER_PARTICIPANT {
            let lines: Vec<ResponseLine> = read_jsonl(&self.responses_path(pid, n))?;
            questionnaire_responses.extend(lines.into_iter().map(|l| QuestionnaireEntry {
                session_index: n,
                phase: l.phase,
                response: l.response,
            }));
        }
        Ok(ParticipantRecord {
            participant_id: entry.participant_id,
            enrollment_index: entry.enrollment_index,
            role_order: entry.role_order,
            completed_sessions: completions.into_iter().map(|c| c.session_index).collect(),
            questionnaire_responses,
        })
    }

    /// All registered participants in enrollment order.
    pub fn participants(&self) -> Result<Vec<ParticipantRecord>, StudyError> {
        self.registry()?
            .iter()
            .map(|e| self.participant(&e.participant_id))
            .collect()
    }

    /// Validates `response` against `instrument` and appends it.
    pub fn record_response(
        &self,
        pid: &ParticipantId,
        session_index: u8,
        phase: QuestionnairePhase,
        instrument: &Instrument,
        response: ResponseSet,
    ) -> Result<QuestionnaireEntry, StudyError> {
        if !(1..=super::SESSIONS_PER_PARTICIPANT).contains(&session_index) {
            return Err(super::SessionError::InvalidSessionIndex(session_index).into());
        }
        score_response(instrument, &response)?;
        let _guard = self.lock.lock().expect("study lock");
        let record = self.participant(pid)?;
        if record
            .response(session_index, phase, &response.instrument_id)
            .is_some()
        {
            return Err(StudyError::DuplicateResponse {
                session_index,
                phase,
                instrument_id: response.instrument_id,
            });
        }
        append_jsonl(
            &self.responses_path(pid, session_index),
            &ResponseLine {
                phase,
                response: response.clone(),
            },
        )?;
        Ok(QuestionnaireEntry {
            session_index,
            phase,
            response,
        })
    }

    pub fn mark_completed(
        &self,
        pid: &ParticipantId,
        session_index: u8,
        session_id: &SessionId,
        ended_at: u64,
    ) -> Result<(), StudyError> {
        let _guard = self.lock.lock().expect("study lock");
        self.registry_entry(pid)?;
        let path = self.completions_path(pid);
        let existing: Vec<CompletionLine> = read_jsonl(&path)?;
        if existing.iter().any(|c| c.session_index == session_index) {
            return Ok(());
        }
        append_jsonl(
            &path,
            &CompletionLine {
                session_index,
                session_id: session_id.clone(),
                ended_at,
            },
        )
    }

    /// Persists a whole record: registers it if new, then rewrites its
    /// response and completion files.
    pub fn save_participant(&self, record: &ParticipantRecord) -> Result<(), StudyError> {
        check_permutation(&record.role_order, &record.role_order)?;
        let mut seen = BTreeSet::new();
        for q in &record.questionnaire_responses {
            if !seen.insert((q.session_index, q.phase, q.response.instrument_id.clone())) {
                return Err(StudyError::DuplicateResponse {
                    session_index: q.session_index,
                    phase: q.phase,
                    instrument_id: q.response.instrument_id.clone(),
                });
            }
        }
        let _guard = self.lock.lock().expect("study lock");
        match self
            .registry()?
            .into_iter()
            .find(|e| e.participant_id == record.participant_id)
        {
            Some(e) if e.role_order != record.role_order || e.enrollment_index != record.enrollment_index => {
                return Err(StudyError::AlreadyRegistered(record.participant_id.clone()))
            }
            Some(_) => {}
            None => append_jsonl(
                &self.registry_path(),
                &RegistryEntry {
                    participant_id: record.participant_id.clone(),
                    enrollment_index: record.enrollment_index,
                    role_order: record.role_order.clone(),
                },
            )?,
        }
        let pid = &record.participant_id;
        let mut by_session: BTreeMap<u8, Vec<ResponseLine>> = BTreeMap::new();
        for q in &record.questionnaire_responses {
            by_session.entry(q.session_index).or_default().push(ResponseLine {
                phase: q.phase,
                response: q.response.clone(),
            });
        }
        for n in 1..=super::SESSIONS_PER_PARTICIPANT {
            let lines = by_session.remove(&n).unwrap_or_default();
            let path = self.responses_path(pid, n);
            if !lines.is_empty() || path.exists() {
                write_jsonl(&path, &lines)?;
            }
        }
        let previous: Vec<CompletionLine> = read_jsonl(&self.completions_path(pid))?;
        let completions: Vec<CompletionLine> = record
            .completed_sessions
            .iter()
            .map(|&n| {
                previous
                    .iter()
                    .find(|c| c.session_index == n)
                    .cloned()
                    .unwrap_or(CompletionLine {
                        session_index: n,
                        session_id: SessionId::new(""),
                        ended_at: 0,
                    })
            })
            .collect();
        write_jsonl(&self.completions_path(pid), &completions)
    }
}

fn check_permutation(order: &[RoleId], roles: &[RoleId]) -> Result<(), StudyError> {
    let a: BTreeSet<&RoleId> = order.iter().collect();
    let b: BTreeSet<&RoleId> = roles.iter().collect();
    if order.is_empty() || a.len() != order.len() || a != b {
        return Err(StudyError::InvalidRoleOrder(format!("{order:?}")));
    }
    Ok(())
}
