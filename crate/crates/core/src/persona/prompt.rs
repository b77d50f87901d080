//! System-prompt compilation. Traits are conveyed through fixed descriptive
//! sentences chosen by score band, never as raw numbers.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{BehaviorVocabulary, BigFiveProfile, BigFiveTrait, PersonaError, RoleCard, RoleId, TaskSpec};
use crate::dialogue::{OutputSchema, TurnRules};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptText(pub String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Low,
    Mid,
    High,
}

fn band(score: u8) -> Band {
    match score {
        0..=7 => Band::Low,
        8..=16 => Band::Mid,
        _ => Band::High,
    }
}

fn sentence(t: BigFiveTrait, b: Band) -> &'static str {
    use BigFiveTrait::*;
    match (t, b) {
        (Openness, Band::Low) => "{name} prefers the familiar, trusts proven routines and is wary of untested ideas.",
        (Openness, Band::Mid) => "{name} is open to new ideas when they seem practical but does not chase novelty for its own sake.",
        (Openness, Band::High) => "{name} is curious and imaginative, enjoys unconventional ideas and readily questions how things have always been done.",
        (Conscientiousness, Band::Low) => "{name} is spontaneous and easygoing about plans, tends to forget chores and dislikes rigid schedules.",
        (Conscientiousness, Band::Mid) => "{name} keeps reasonable order but is willing to bend plans when circumstances change.",
        (Conscientiousness, Band::High) => "{name} is organized, reliable and principled, and expects agreements to be kept to the letter.",
        (Extraversion, Band::Low) => "{name} is reserved and quiet, speaks briefly and prefers calm, low-key company.",
        (Extraversion, Band::Mid) => "{name} is comfortable in conversation without needing to dominate it.",
        (Extraversion, Band::High) => "{name} is outgoing and talkative, draws energy from company and is quick to speak up.",
        (Agreeableness, Band::Low) => "{name} is blunt and competitive, puts personal interests first and does not mind open disagreement.",
        (Agreeableness, Band::Mid) => "{name} is generally cooperative but stands firm when something matters personally.",
        (Agreeableness, Band::High) => "{name} is warm and accommodating, seeks harmony and tends to give in to keep the peace.",
        (Neuroticism, Band::Low) => "{name} stays calm under pressure and rarely gets upset.",
        (Neuroticism, Band::Mid) => "{name} is usually composed but can become tense when a conflict drags on.",
        (Neuroticism, Band::High) => "{name} worries easily, gets irritated quickly and reacts strongly to stress and criticism.",
    }
}

/// Natural-language disposition statements for a profile, in (O, C, E, A, N) order.
pub fn disposition_sentences(name: &str, profile: &BigFiveProfile) -> Vec<String> {
    BigFiveTrait::ALL
        .iter()
        .map(|&t| sentence(t, band(profile.score(t))).replace("{name}", name))
        .collect()
}

fn write_task(out: &mut String, task: &TaskSpec) {
    let _ = writeln!(out, "# Task background");
    let _ = writeln!(out, "{}", task.background.trim());
    let _ = writeln!(out);
    let _ = writeln!(out, "Objective: {}", task.objective.trim());
    let _ = writeln!(out);
    let _ = writeln!(out, "## Current house rules");
    for category in &task.house_rules {
        let _ = writeln!(out, "### {}", category.name.title());
        for rule in &category.rules {
            let _ = writeln!(out, "- {}", rule.trim());
        }
    }
    if !task.constraints.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "## Constraints");
        for c in &task.constraints {
            let _ = writeln!(out, "- {}", c.trim());
        }
    }
    let _ = writeln!(out);
}

fn write_persona_block(out: &mut String, card: &RoleCard) {
    let name = &card.display_name;
    let _ = writeln!(out, "## {name}");
    let _ = writeln!(out, "Basic info: {}", card.basic_info.trim());
    let _ = writeln!(out, "Lifestyle log:");
    for entry in &card.lifestyle_log {
        let _ = writeln!(out, "- {entry}");
    }
    let _ = writeln!(
        out,
        "Hidden motivation (guides {name}'s choices; {name} never states it outright): {}",
        card.hidden_motivation.trim()
    );
    let _ = writeln!(out, "Stance on house rules:");
    for (category, stance) in &card.stance_on_house_rules {
        let _ = writeln!(out, "- {}: {stance}", category.title());
    }
    let _ = writeln!(out, "Personality:");
    for s in disposition_sentences(name, &card.profile) {
        let _ = writeln!(out, "- {s}");
    }
    let _ = writeln!(out);
}

/// Builds the avatar-conditioning system prompt. Sections appear in a fixed
/// order: task background, turn-taking rules, output format, persona blocks
/// for the two model-voiced roles, allowed behaviors.
pub fn compile_system_prompt(
    task: &TaskSpec,
    personas: &[RoleCard],
    user_role: &RoleId,
    rules: &TurnRules,
    schema: &OutputSchema,
    vocab: &BehaviorVocabulary,
) -> Result<PromptText, PersonaError> {
    if personas.len() != 3 {
        return Err(PersonaError::InvalidScenario(format!(
            "expected exactly 3 roles, found {}",
            personas.len()
        )));
    }
    let user = personas
        .iter()
        .find(|p| &p.role_id == user_role)
        .ok_or_else(|| PersonaError::UnknownRole(user_role.to_string()))?;
    let avatars: Vec<&RoleCard> = personas.iter().filter(|p| &p.role_id != user_role).collect();
    let avatar_names: Vec<&str> = avatars.iter().map(|a| a.display_name.as_str()).collect();
    let user_name = &user.display_name;

    let mut out = String::new();
    write_task(&mut out, task);

    let _ = writeln!(out, "# Turn-taking rules");
    let _ = writeln!(
        out,
        "- The human participant plays {user_name}. Never speak as {user_name} and never invent {user_name}'s words."
    );
    let _ = writeln!(
        out,
        "- You voice {}. Each of your replies is exactly one utterance by the housemate whose turn it is.",
        avatar_names.join(" and ")
    );
    let _ = writeln!(
        out,
        "- After each contribution from {user_name}, {} avatar replies follow{}.",
        rules.avatar_turns_per_round,
        if rules.require_distinct_avatar_speakers {
            ", one from each of your characters"
        } else {
            ""
        }
    );
    let _ = writeln!(
        out,
        "- Respond to what was just said, stay in character, and keep each utterance to a few spoken sentences."
    );
    let _ = writeln!(out);

    let _ = writeln!(out, "# Output format");
    let _ = writeln!(out, "{}", schema.describe());
    let example = format!(
        "{{\"{}\": \"{}\", \"{}\": \"...\", \"{}\": \"{}\", \"{}\": \"{}\"}}",
        OutputSchema::FIELDS[0],
        avatar_names[0],
        OutputSchema::FIELDS[1],
        OutputSchema::FIELDS[2],
        BehaviorVocabulary::IDLE_GESTURE,
        OutputSchema::FIELDS[3],
        BehaviorVocabulary::NEUTRAL_EMOTION,
    );
    let _ = writeln!(out, "Example: {example}");
    let _ = writeln!(out);

    let _ = writeln!(out, "# Personas");
    for avatar in &avatars {
        write_persona_block(&mut out, avatar);
    }

    let _ = writeln!(out, "# Allowed behaviors");
    let _ = writeln!(out, "Allowed emotions: {}", vocab.emotions().join(", "));
    let _ = writeln!(out, "Allowed gestures: {}", vocab.gestures().join(", "));

    Ok(PromptText(out))
}

/// Persona-only conditioning used when a role answers a questionnaire.
pub fn compile_persona_prompt(persona: &RoleCard) -> PromptText {
    let name = &persona.display_name;
    let mut out = String::new();
    let _ = writeln!(out, "You are {name}. Stay in character and answer as {name} would.");
    let _ = writeln!(out);
    write_persona_block(&mut out, persona);
    PromptText(out.trim_end().to_string() + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::Scenario;
    use proptest::prelude::*;

    fn compile_for(user: &str, vocab: &BehaviorVocabulary) -> String {
        let s = Scenario::bundled_default();
        compile_system_prompt(
            &s.task,
            &s.roles,
            &RoleId::new(user),
            &TurnRules::default(),
            &OutputSchema::default(),
            vocab,
        )
        .unwrap()
        .0
    }

    #[test]
    fn user_persona_block_is_omitted() {
        let s = Scenario::bundled_default();
        let prompt = compile_for("alice", &s.vocabulary);
        assert!(prompt.contains("## Benji"));
        assert!(prompt.contains("## Caden"));
        assert!(!prompt.contains("## Alice"));
        let alice = s.resolve_role("alice").unwrap();
        assert!(!prompt.contains(alice.hidden_motivation.as_str()));
        assert!(!prompt.contains(alice.basic_info.as_str()));
    }

    #[test]
    fn sections_in_order() {
        let s = Scenario::bundled_default();
        let prompt = compile_for("benji", &s.vocabulary);
        let pos = |needle: &str| prompt.find(needle).unwrap_or_else(|| panic!("missing {needle}"));
        let order = [
            pos("# Task background"),
            pos("# Turn-taking rules"),
            pos("# Output format"),
            pos("# Personas"),
            pos("## Alice"),
            pos("## Caden"),
            pos("# Allowed behaviors"),
        ];
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
        for field in OutputSchema::FIELDS {
            assert!(prompt.contains(&format!("\"{field}\"")));
        }
    }

    #[test]
    fn deterministic() {
        let s = Scenario::bundled_default();
        assert_eq!(compile_for("caden", &s.vocabulary), compile_for("caden", &s.vocabulary));
    }

    #[test]
    fn unknown_user_role() {
        let s = Scenario::bundled_default();
        let err = compile_system_prompt(
            &s.task,
            &s.roles,
            &RoleId::new("dana"),
            &TurnRules::default(),
            &OutputSchema::default(),
            &s.vocabulary,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "unknown role: dana");
    }

    #[test]
    fn single_emotion_vocabulary() {
        let vocab = BehaviorVocabulary::new(["neutral"], ["idle"]).unwrap();
        let prompt = compile_for("alice", &vocab);
        let line = prompt
            .lines()
            .find(|l| l.starts_with("Allowed emotions:"))
            .unwrap();
        assert_eq!(line, "Allowed emotions: neutral");
        // nothing outside the restricted vocabulary leaks in anywhere
        let full = BehaviorVocabulary::default();
        let words: Vec<&str> = prompt
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .collect();
        for ident in full.emotions().iter().chain(full.gestures()) {
            if ident != "neutral" && ident != "idle" {
                assert!(!words.contains(&ident.as_str()), "{ident} leaked into prompt");
            }
        }
    }

    #[test]
    fn persona_blocks_carry_no_digits_in_personality() {
        let s = Scenario::bundled_default();
        let prompt = compile_for("alice", &s.vocabulary);
        let personality: Vec<&str> = prompt
            .lines()
            .skip_while(|l| !l.starts_with("Personality:"))
            .take(6)
            .collect();
        assert_eq!(personality.len(), 6);
        assert!(personality.iter().all(|l| !l.chars().any(|c| c.is_ascii_digit())));
    }

    #[test]
    fn band_thresholds() {
        assert_eq!(band(0), Band::Low);
        assert_eq!(band(7), Band::Low);
        assert_eq!(band(8), Band::Mid);
        assert_eq!(band(16), Band::Mid);
        assert_eq!(band(17), Band::High);
        assert_eq!(band(24), Band::High);
    }

    #[test]
    fn persona_prompt_mentions_name() {
        let s = Scenario::bundled_default();
        let p = compile_persona_prompt(s.resolve_role("benji").unwrap());
        assert!(p.as_str().starts_with("You are Benji."));
        assert!(p.as_str().contains("curious and imaginative"));
    }

    proptest! {
        // Scores only influence the prompt through their band.
        #[test]
        fn prompt_depends_on_band_not_score(delta in prop::collection::vec(-1i64..=1, 5)) {
            let s = Scenario::bundled_default();
            let mut shifted = s.roles.clone();
            for card in shifted.iter_mut() {
                let scores = card.profile.scores();
                let mut moved = [0i64; 5];
                for i in 0..5 {
                    let v = i64::from(scores[i]) + delta[i];
                    let same_band = (0..=24).contains(&v) && band(v as u8) == band(scores[i]);
                    moved[i] = if same_band { v } else { i64::from(scores[i]) };
                }
                card.profile = BigFiveProfile::from_scores(moved).unwrap();
            }
            let user = RoleId::new("alice");
            let a = compile_system_prompt(&s.task, &s.roles, &user, &TurnRules::default(), &OutputSchema::default(), &s.vocabulary).unwrap();
            let b = compile_system_prompt(&s.task, &shifted, &user, &TurnRules::default(), &OutputSchema::default(), &s.vocabulary).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
