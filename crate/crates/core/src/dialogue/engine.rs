use std::sync::Arc;

use super::{parse_turn, DialogueError, DialogueTurn, OutputSchema, RoleSet, TurnRules, Utterance};
use crate::gateway::{ChatMessage, ChatRole, Gateway, GenerationRequest, Sampling};
use crate::persona::{compile_system_prompt, BehaviorVocabulary, PromptText, RoleId, Scenario};
use crate::study::{ParticipantId, SessionId, SessionState};

/// Turns of history sent with every request (the system prompt is always kept).
pub const DEFAULT_CONTEXT_WINDOW: usize = 30;

/// Regenerations allowed per avatar turn on unparseable output or a wrong speaker.
pub const SPEAKER_RETRIES: u32 = 2;

/// What the model sees: the compiled system prompt plus windowed history.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    pub system_prompt: PromptText,
    pub messages: Vec<ChatMessage>,
}

/// `Ok` iff `turn` was spoken by a non-user role of `session`.
pub fn validate_speaker(turn: &DialogueTurn, session: &SessionState) -> Result<(), DialogueError> {
    if turn.speaker == session.user_role {
        Err(DialogueError::AvatarSpokeAsUser)
    } else if session.roles.contains(&turn.speaker) {
        Ok(())
    } else {
        Err(DialogueError::IllegalSpeaker(turn.speaker.to_string()))
    }
}

/// Runs rounds of one user turn followed by one reply from each avatar.
#[derive(Debug, Clone)]
pub struct DialogueEngine {
    scenario: Arc<Scenario>,
    gateway: Gateway,
    rules: TurnRules,
    schema: OutputSchema,
    sampling: Sampling,
    window: usize,
    speaker_retries: u32,
    roles: RoleSet,
}

impl DialogueEngine {
    pub fn new(scenario: Arc<Scenario>, gateway: Gateway) -> Self {
        let roles = RoleSet::from_cards(&scenario.roles);
        DialogueEngine {
            scenario,
            gateway,
            rules: TurnRules::default(),
            schema: OutputSchema,
            sampling: Sampling::SESSION,
            window: DEFAULT_CONTEXT_WINDOW,
            speaker_retries: SPEAKER_RETRIES,
            roles,
        }
    }

    pub fn with_rules(mut self, rules: TurnRules) -> Result<Self, DialogueError> {
        rules.validate(self.scenario.roles.len().saturating_sub(1))?;
        self.rules = rules;
        Ok(self)
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    pub fn with_speaker_retries(mut self, retries: u32) -> Self {
        self.speaker_retries = retries;
        self
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn rules(&self) -> &TurnRules {
        &self.rules
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn role_set(&self) -> &RoleSet {
        &self.roles
    }

    pub fn vocabulary(&self) -> &BehaviorVocabulary {
        &self.scenario.vocabulary
    }

    /// A fresh session in `setup` with this engine's window.
    pub fn new_session(
        &self,
        session_id: SessionId,
        participant_id: Option<ParticipantId>,
        session_index: u8,
        user_role: RoleId,
    ) -> Result<SessionState, DialogueError> {
        Ok(SessionState::new(
            session_id,
            participant_id,
            session_index,
            user_role,
            self.scenario.role_ids(),
            self.window,
        )?)
    }

    pub fn system_prompt(&self, user_role: &RoleId) -> Result<PromptText, DialogueError> {
        Ok(compile_system_prompt(
            &self.scenario.task,
            &self.scenario.roles,
            user_role,
            &self.rules,
            &self.schema,
            &self.scenario.vocabulary,
        )?)
    }

    fn display_name<'a>(&'a self, id: &'a RoleId) -> &'a str {
        self.roles.display_name(id).unwrap_or(id.as_str())
    }

    fn turn_message(&self, session: &SessionState, turn: &DialogueTurn) -> ChatMessage {
        let name = self.display_name(&turn.speaker);
        if turn.speaker == session.user_role {
            ChatMessage::user(format!("{name}: {}", turn.text))
        } else {
            ChatMessage::assistant(self.schema.encode(&turn.utterance(), name))
        }
    }

    /// System prompt plus the most recent `window` turns as role-attributed messages.
    pub fn build_generation_context(&self, session: &SessionState) -> Result<GenerationContext, DialogueError> {
        let window = self.window.min(session.history.window());
        let turns = session.history.turns();
        let recent = &turns[turns.len().saturating_sub(window)..];
        Ok(GenerationContext {
            system_prompt: self.system_prompt(&session.user_role)?,
            messages: recent.iter().map(|t| self.turn_message(session, t)).collect(),
        })
    }

    fn turn_instruction(&self, speaker: &RoleId) -> String {
        let name = self.display_name(speaker);
        format!("It is {name}'s turn to respond. Reply as {name} with exactly one JSON object.")
    }

    fn request_for(&self, session: &SessionState, speaker: &RoleId) -> Result<GenerationRequest, DialogueError> {
        let ctx = self.build_generation_context(session)?;
        let mut messages = ctx.messages;
        let instruction = self.turn_instruction(speaker);
        match messages.last_mut() {
            Some(last) if last.role == ChatRole::User => {
                last.content.push_str("\n\n");
                last.content.push_str(&instruction);
            }
            _ => messages.push(ChatMessage::user(instruction)),
        }
        Ok(GenerationRequest::new(ctx.system_prompt.0, messages, self.sampling)?)
    }

    /// Records the user's turn (neutral emotion, idle gesture) and opens a round.
    pub fn accept_user_turn(&self, session: &mut SessionState, text: &str) -> Result<DialogueTurn, DialogueError> {
        session.require_phase(crate::study::Phase::AwaitingUser, "submit an utterance")?;
        let text = text.trim();
        if text.is_empty() {
            return Err(DialogueError::EmptyUtterance);
        }
        if session.pending {
            return Err(DialogueError::PendingRound);
        }
        if session.history.rounds(&session.user_role) >= self.rules.max_rounds {
            return Err(DialogueError::RoundLimit(self.rules.max_rounds));
        }
        let turn = session
            .history
            .append(Utterance {
                speaker: session.user_role.clone(),
                text: text.to_string(),
                gesture: BehaviorVocabulary::IDLE_GESTURE.to_string(),
                emotion: BehaviorVocabulary::NEUTRAL_EMOTION.to_string(),
            })
            .clone();
        session.pending = true;
        Ok(turn)
    }

    /// Avatar speakers for one round, in scenario order.
    fn round_speakers(&self, session: &SessionState) -> Vec<RoleId> {
        let avatars = session.avatar_roles();
        (0..self.rules.avatar_turns_per_round as usize)
            .map(|i| avatars[i % avatars.len()].clone())
            .collect()
    }

    fn generate_turn(&self, session: &SessionState, speaker: &RoleId) -> Result<Utterance, DialogueError> {
        let request = self.request_for(session, speaker)?;
        let attempts = self.speaker_retries + 1;
        let mut last = DialogueError::Unparseable;
        for _ in 0..attempts {
            let raw = self.gateway.generate(&request)?;
            let parsed = match parse_turn(&raw, &self.scenario.vocabulary, &self.roles) {
                Ok(p) => p.utterance,
                Err(e) => {
                    last = e;
                    continue;
                }
            };
            if parsed.speaker == session.user_role {
                last = DialogueError::AvatarSpokeAsUser;
            } else if &parsed.speaker != speaker {
                last = DialogueError::SpeakerMismatch {
                    expected: speaker.clone(),
                    actual: parsed.speaker,
                };
            } else {
                return Ok(parsed);
            }
        }
        Err(DialogueError::InvalidAvatarOutput {
            speaker: self.display_name(speaker).to_string(),
            attempts,
            last: Box::new(last),
        })
    }

    /// Obtains the avatar replies to the pending user turn. `on_turn` sees
    /// each reply as soon as it is appended. On failure the round's avatar
    /// turns are removed, the user turn stays, and `pending` remains set.
    pub fn generate_round<F>(&self, session: &mut SessionState, mut on_turn: F) -> Result<Vec<DialogueTurn>, DialogueError>
    where
        F: FnMut(&DialogueTurn),
    {
        match session.history.last() {
            Some(t) if t.speaker == session.user_role && session.pending => {}
            _ => return Err(DialogueError::NothingToRespondTo),
        }
        session.begin_generation()?;
        let start = session.history.len();
        let mut produced = Vec::new();
        for speaker in self.round_speakers(session) {
            match self.generate_turn(session, &speaker) {
                Ok(u) => {
                    let turn = session.history.append(u).clone();
                    on_turn(&turn);
                    produced.push(turn);
                }
                Err(e) => {
                    session.history.truncate(start);
                    session.finish_generation();
                    return Err(e);
                }
            }
        }
        session.pending = false;
        session.finish_generation();
        Ok(produced)
    }

    pub fn submit_user_utterance(&self, session: &mut SessionState, text: &str) -> Result<Vec<DialogueTurn>, DialogueError> {
        self.submit_user_utterance_with(session, text, |_| {})
    }

    pub fn submit_user_utterance_with<F>(
        &self,
        session: &mut SessionState,
        text: &str,
        on_turn: F,
    ) -> Result<Vec<DialogueTurn>, DialogueError>
    where
        F: FnMut(&DialogueTurn),
    {
        self.accept_user_turn(session, text)?;
        self.generate_round(session, on_turn)
    }
}
