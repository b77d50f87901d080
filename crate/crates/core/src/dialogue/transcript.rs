//! Append-only session transcripts: one JSON record per line, a session
//! header first, then phase changes, turns and pending flags in the order
//! they happened. Replaying the records rebuilds the [`SessionState`].

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DialogueError, DialogueTurn};
use crate::persona::RoleId;
use crate::study::{ParticipantId, Phase, SessionId, SessionState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub session_id: SessionId,
    pub participant_id: Option<ParticipantId>,
    pub session_index: u8,
    pub user_role: RoleId,
    pub roles: Vec<RoleId>,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Session(TranscriptHeader),
    Phase { phase: Phase, at: Option<u64> },
    Turn(DialogueTurn),
    Pending { pending: bool },
}

fn io_error(path: &Path, source: std::io::Error) -> DialogueError {
    DialogueError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Appends the records needed to bring the file in line with a session.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: File,
    written_seq: u64,
    pending: bool,
    phase: Phase,
}

impl TranscriptWriter {
    /// Creates (or truncates) `path`, writes the header and the current state.
    pub fn create(path: impl Into<PathBuf>, session: &SessionState) -> Result<Self, DialogueError> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut writer = TranscriptWriter {
            path,
            file,
            written_seq: 0,
            pending: false,
            phase: Phase::Setup,
        };
        writer.write(&TranscriptRecord::Session(TranscriptHeader {
            session_id: session.session_id.clone(),
            participant_id: session.participant_id.clone(),
            session_index: session.session_index,
            user_role: session.user_role.clone(),
            roles: session.roles.clone(),
            window: session.history.window(),
        }))?;
        writer.sync(session)?;
        Ok(writer)
    }

    /// Reopens a transcript whose contents already match `session`.
    pub fn open_append(path: impl Into<PathBuf>, session: &SessionState) -> Result<Self, DialogueError> {
        let path = path.into();
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| io_error(&path, e))?;
        Ok(TranscriptWriter {
            path,
            file,
            written_seq: session.history.last().map_or(0, |t| t.seq),
            pending: session.pending,
            phase: match session.phase {
                Phase::Generating => Phase::AwaitingUser,
                p => p,
            },
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&mut self, record: &TranscriptRecord) -> Result<(), DialogueError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(|e| io_error(&self.path, e))
    }

    /// Writes new turns, then a pending change, then a phase change.
    /// The transient `generating` phase is never persisted.
    pub fn sync(&mut self, session: &SessionState) -> Result<(), DialogueError> {
        let last = session.history.last().map_or(0, |t| t.seq);
        if last < self.written_seq {
            return Err(DialogueError::Transcript(format!(
                "session has {last} turns but {} are already persisted",
                self.written_seq
            )));
        }
        for turn in session.history.since(self.written_seq).to_vec() {
            self.written_seq = turn.seq;
            self.write(&TranscriptRecord::Turn(turn))?;
        }
        if session.pending != self.pending {
            self.pending = session.pending;
            self.write(&TranscriptRecord::Pending {
                pending: session.pending,
            })?;
        }
        if session.phase != Phase::Generating && session.phase != self.phase {
            self.phase = session.phase;
            let at = match session.phase {
                Phase::AwaitingUser => session.started_at,
                Phase::Ended => session.ended_at,
                _ => None,
            };
            self.write(&TranscriptRecord::Phase {
                phase: session.phase,
                at,
            })?;
        }
        self.file.flush().map_err(|e| io_error(&self.path, e))
    }
}

/// Reads every record. A final line cut short by an interrupted write is ignored.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, DialogueError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => {
                return Err(DialogueError::Transcript(format!(
                    "{} line {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Rebuilds a session from its records.
pub fn replay_transcript(records: &[TranscriptRecord]) -> Result<SessionState, DialogueError> {
    let (header, rest) = match records.split_first() {
        Some((TranscriptRecord::Session(h), rest)) => (h, rest),
        _ => return Err(DialogueError::Transcript("missing session header".into())),
    };
    let mut session = SessionState::new(
        header.session_id.clone(),
        header.participant_id.clone(),
        header.session_index,
        header.user_role.clone(),
        header.roles.clone(),
        header.window,
    )?;
    for record in rest {
        match record {
            TranscriptRecord::Session(_) => {
                return Err(DialogueError::Transcript("duplicate session header".into()))
            }
            TranscriptRecord::Phase { phase, at } => match phase {
                Phase::AwaitingUser => session.start(at.unwrap_or(0))?,
                Phase::Ended => session.end(at.unwrap_or(0))?,
                other => {
                    return Err(DialogueError::Transcript(format!("unexpected phase record {other}")))
                }
            },
            TranscriptRecord::Turn(turn) => {
                if !session.roles.contains(&turn.speaker) {
                    return Err(DialogueError::IllegalSpeaker(turn.speaker.to_string()));
                }
                session
                    .history
                    .restore(turn.clone())
                    .map_err(DialogueError::Transcript)?;
            }
            TranscriptRecord::Pending { pending } => session.pending = *pending,
        }
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::Utterance;

    fn session() -> SessionState {
        SessionState::new(
            SessionId::new("s1"),
            Some(ParticipantId::new("p01").unwrap()),
            2,
            "benji".into(),
            vec!["alice".into(), "benji".into(), "caden".into()],
            30,
        )
        .unwrap()
    }

    fn utt(who: &str, text: &str) -> Utterance {
        Utterance {
            speaker: who.into(),
            text: text.into(),
            gesture: "idle".into(),
            emotion: "neutral".into(),
        }
    }

    #[test]
    fn write_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t/transcript.jsonl");
        let mut s = session();
        let mut w = TranscriptWriter::create(&path, &s).unwrap();
        s.start(100).unwrap();
        w.sync(&s).unwrap();
        s.history.append(utt("benji", "hello"));
        s.pending = true;
        w.sync(&s).unwrap();
        s.history.append(utt("alice", "hi"));
        s.history.append(utt("caden", "hey"));
        s.pending = false;
        w.sync(&s).unwrap();
        s.end(200).unwrap();
        w.sync(&s).unwrap();
        w.sync(&s).unwrap();

        let records = read_transcript(&path).unwrap();
        assert_eq!(records.len(), 1 + 1 + 1 + 1 + 2 + 1 + 1);
        assert_eq!(replay_transcript(&records).unwrap(), s);

        let text = fs::read_to_string(&path).unwrap();
        let turn_line = text.lines().find(|l| l.contains("\"turn\"")).unwrap();
        assert_eq!(
            turn_line,
            r#"{"record":"turn","speaker":"benji","text":"hello","gesture":"idle","emotion":"neutral","seq":1}"#
        );
    }

    #[test]
    fn reopen_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.jsonl");
        let mut s = session();
        s.start(1).unwrap();
        TranscriptWriter::create(&path, &s).unwrap();
        let mut restored = replay_transcript(&read_transcript(&path).unwrap()).unwrap();
        assert_eq!(restored, s);
        let mut w = TranscriptWriter::open_append(&path, &restored).unwrap();
        restored.history.append(utt("benji", "more"));
        w.sync(&restored).unwrap();
        assert_eq!(replay_transcript(&read_transcript(&path).unwrap()).unwrap(), restored);
    }

    #[test]
    fn truncated_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.jsonl");
        let mut s = session();
        s.start(1).unwrap();
        TranscriptWriter::create(&path, &s).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"record\":\"turn\",\"speak").unwrap();
        assert_eq!(replay_transcript(&read_transcript(&path).unwrap()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(replay_transcript(&[]).is_err());
        let s = session();
        let header = TranscriptRecord::Session(TranscriptHeader {
            session_id: s.session_id.clone(),
            participant_id: None,
            session_index: 1,
            user_role: "alice".into(),
            roles: s.roles.clone(),
            window: 30,
        });
        let gap = TranscriptRecord::Turn(DialogueTurn::from_utterance(utt("alice", "x"), 2));
        assert!(replay_transcript(&[header.clone(), gap]).is_err());
        let dana = TranscriptRecord::Turn(DialogueTurn::from_utterance(utt("dana", "x"), 1));
        assert!(replay_transcript(&[header, dana]).is_err());
    }
}
