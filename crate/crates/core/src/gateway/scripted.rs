use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{GatewayError, GenerationRequest, Provider, ProviderFailure};

/// One canned provider outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptEntry {
    Completion(String),
    /// Simulates a transient provider failure (timeout, 5xx).
    TransientError(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptLine {
    Text(String),
    Completion { completion: String },
    Error { error: String },
}

#[derive(Debug, Default)]
struct ScriptState {
    cursor: usize,
    log: Vec<GenerationRequest>,
}

/// Replays a fixed list of outcomes in order and records every request.
#[derive(Debug)]
pub struct ScriptedProvider {
    script: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedProvider {
    pub fn new<I, S>(completions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_entries(
            completions
                .into_iter()
                .map(|s| ScriptEntry::Completion(s.into()))
                .collect(),
        )
    }

    pub fn from_entries(script: Vec<ScriptEntry>) -> Self {
        ScriptedProvider {
            script,
            state: Mutex::new(ScriptState::default()),
        }
    }

    /// Parses a line-delimited script. Each non-blank line is a JSON string
    /// (the completion), `{"completion": "..."}`, or `{"error": "..."}`.
    pub fn parse(document: &str) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (lineno, line) in document.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(line).map_err(|e| {
                GatewayError::InvalidConfig(format!("script line {}: {e}", lineno + 1))
            })?;
            entries.push(match parsed {
                ScriptLine::Text(s) | ScriptLine::Completion { completion: s } => {
                    ScriptEntry::Completion(s)
                }
                ScriptLine::Error { error } => ScriptEntry::TransientError(error),
            });
        }
        if entries.is_empty() {
            return Err(GatewayError::InvalidConfig("script is empty".into()));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let doc = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&doc)
    }

    /// Serializes completions in the line format accepted by [`ScriptedProvider::parse`].
    pub fn to_script_lines<S: AsRef<str>>(completions: &[S]) -> String {
        let mut out = String::new();
        for c in completions {
            out.push_str(&serde_json::to_string(c.as_ref()).expect("string serializes"));
            out.push('\n');
        }
        out
    }

    pub fn call_log(&self) -> Vec<GenerationRequest> {
        self.state.lock().expect("script lock").log.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("script lock").log.len()
    }

    pub fn remaining(&self) -> usize {
        let st = self.state.lock().expect("script lock");
        self.script.len().saturating_sub(st.cursor)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderFailure> {
        let mut st = self.state.lock().expect("script lock");
        st.log.push(request.clone());
        let Some(entry) = self.script.get(st.cursor) else {
            return Err(ProviderFailure::Fatal("script exhausted".into()));
        };
        st.cursor += 1;
        match entry {
            ScriptEntry::Completion(text) => Ok(text.clone()),
            ScriptEntry::TransientError(cause) => Err(ProviderFailure::Transient(cause.clone())),
        }
    }

    fn describe(&self) -> String {
        format!("scripted ({} entries)", self.script.len())
    }
}
