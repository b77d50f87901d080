//! Turn-taking dialogue: the four-field turn schema, the output parser with
//! its repair policy, and the engine that runs one user turn plus the avatar
//! replies it triggers.

mod engine;
mod parse;
mod transcript;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::persona::{PersonaError, RoleId};
use crate::study::SessionError;

pub use engine::{validate_speaker, DialogueEngine, GenerationContext, DEFAULT_CONTEXT_WINDOW};
pub use parse::{extract_objects, parse_turn, ParsedTurn, Repair, RoleSet};
pub use transcript::{read_transcript, replay_transcript, TranscriptHeader, TranscriptRecord, TranscriptWriter};

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("unparseable output")]
    Unparseable,
    #[error("illegal speaker: {0}")]
    IllegalSpeaker(String),
    #[error("avatar spoke as user")]
    AvatarSpokeAsUser,
    #[error("empty generated text")]
    EmptyGeneratedText,
    #[error("expected {expected} to speak, got {actual}")]
    SpeakerMismatch { expected: RoleId, actual: RoleId },
    #[error("no valid reply for {speaker} after {attempts} attempts: {last}")]
    InvalidAvatarOutput {
        speaker: String,
        attempts: u32,
        last: Box<DialogueError>,
    },
    #[error("a round is pending: retry generation before submitting a new utterance")]
    PendingRound,
    #[error("nothing to respond to: the last turn is not a user turn")]
    NothingToRespondTo,
    #[error("round limit reached ({0} rounds)")]
    RoundLimit(u32),
    #[error("invalid turn rules: {0}")]
    InvalidRules(String),
    #[error("corrupt transcript: {0}")]
    Transcript(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Generation(#[from] GatewayError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
}

impl DialogueError {
    /// True for failures where the user turn was kept and the round may be retried.
    pub fn is_generation_failure(&self) -> bool {
        matches!(
            self,
            DialogueError::Generation(_) | DialogueError::InvalidAvatarOutput { .. }
        )
    }
}

/// The four-field structured reply: who speaks, what they say, and the
/// nonverbal channel that accompanies it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: RoleId,
    pub text: String,
    pub gesture: String,
    pub emotion: String,
}

/// An utterance placed in a session, stamped with its sequence number.
/// Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: RoleId,
    pub text: String,
    pub gesture: String,
    pub emotion: String,
    pub seq: u64,
}

impl DialogueTurn {
    pub fn from_utterance(u: Utterance, seq: u64) -> Self {
        DialogueTurn {
            speaker: u.speaker,
            text: u.text,
            gesture: u.gesture,
            emotion: u.emotion,
            seq,
        }
    }

    pub fn utterance(&self) -> Utterance {
        Utterance {
            speaker: self.speaker.clone(),
            text: self.text.clone(),
            gesture: self.gesture.clone(),
            emotion: self.emotion.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRules {
    pub avatar_turns_per_round: u32,
    pub max_rounds: u32,
    pub require_distinct_avatar_speakers: bool,
}

impl Default for TurnRules {
    fn default() -> Self {
        TurnRules {
            avatar_turns_per_round: 2,
            max_rounds: 60,
            require_distinct_avatar_speakers: true,
        }
    }
}

impl TurnRules {
    pub fn validate(&self, avatar_count: usize) -> Result<(), DialogueError> {
        if self.avatar_turns_per_round < 1 {
            return Err(DialogueError::InvalidRules(
                "avatar_turns_per_round must be at least 1".into(),
            ));
        }
        if self.max_rounds < 1 {
            return Err(DialogueError::InvalidRules("max_rounds must be at least 1".into()));
        }
        if self.require_distinct_avatar_speakers
            && self.avatar_turns_per_round as usize != avatar_count
        {
            return Err(DialogueError::InvalidRules(format!(
                "distinct speakers need exactly {avatar_count} avatar turns per round"
            )));
        }
        Ok(())
    }
}

/// The fixed (speaker, text, gesture, emotion) object schema.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutputSchema;

#[derive(Serialize)]
struct WireTurn<'a> {
    speaker: &'a str,
    text: &'a str,
    gesture: &'a str,
    emotion: &'a str,
}

impl OutputSchema {
    pub const FIELDS: [&'static str; 4] = ["speaker", "text", "gesture", "emotion"];

    pub fn describe(&self) -> String {
        let [speaker, text, gesture, emotion] = Self::FIELDS;
        format!(
            "Reply with exactly one JSON object and nothing else. It has exactly four fields:\n\
             - \"{speaker}\": the name of the housemate who is speaking\n\
             - \"{text}\": the words they say aloud\n\
             - \"{gesture}\": one identifier from the allowed gestures\n\
             - \"{emotion}\": one identifier from the allowed emotions"
        )
    }

    /// Wire form of an utterance, with `speaker_label` in the speaker field.
    pub fn encode(&self, u: &Utterance, speaker_label: &str) -> String {
        serde_json::to_string(&WireTurn {
            speaker: speaker_label,
            text: &u.text,
            gesture: &u.gesture,
            emotion: &u.emotion,
        })
        .expect("strings serialize")
    }
}

/// Ordered turn log; every turn is kept, the window only bounds model context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationHistory {
    turns: Vec<DialogueTurn>,
    window: usize,
}

impl Default for ConversationHistory {
    fn default() -> Self {
        ConversationHistory::new(DEFAULT_CONTEXT_WINDOW)
    }
}

impl ConversationHistory {
    pub fn new(window: usize) -> Self {
        ConversationHistory {
            turns: Vec::new(),
            window: window.max(1),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn turns(&self) -> &[DialogueTurn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn last(&self) -> Option<&DialogueTurn> {
        self.turns.last()
    }

    /// Sequence numbers start at 1 and are gapless.
    pub fn next_seq(&self) -> u64 {
        self.turns.last().map_or(1, |t| t.seq + 1)
    }

    /// Appends `u` with the next sequence number.
    pub fn append(&mut self, u: Utterance) -> &DialogueTurn {
        let seq = self.next_seq();
        self.turns.push(DialogueTurn::from_utterance(u, seq));
        self.turns.last().expect("just pushed")
    }

    /// Re-inserts a persisted turn; rejects out-of-order sequence numbers.
    pub fn restore(&mut self, turn: DialogueTurn) -> Result<(), String> {
        if turn.seq != self.next_seq() {
            return Err(format!(
                "turn seq {} out of order (expected {})",
                turn.seq,
                self.next_seq()
            ));
        }
        self.turns.push(turn);
        Ok(())
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.turns.truncate(len);
    }

    /// The most recent `window` turns.
    pub fn recent(&self) -> &[DialogueTurn] {
        let start = self.turns.len().saturating_sub(self.window);
        &self.turns[start..]
    }

    /// Turns with a sequence number strictly greater than `seq`.
    pub fn since(&self, seq: u64) -> &[DialogueTurn] {
        let start = self.turns.partition_point(|t| t.seq <= seq);
        &self.turns[start..]
    }

    /// Number of rounds opened by a user turn.
    pub fn rounds(&self, user: &RoleId) -> u32 {
        self.turns.iter().filter(|t| &t.speaker == user).count() as u32
    }
}
