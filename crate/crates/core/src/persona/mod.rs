//! Avatar identities: Big Five profiles, role cards, the shared house-meeting
//! task, and the behavior vocabulary avatars may express.

mod prompt;
mod scenario;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{compile_persona_prompt, compile_system_prompt, disposition_sentences, PromptText};
pub use scenario::{Scenario, ScenarioManifest};

/// Upper bound of a NEO-FFI-30 trait score (6 items on a 0–4 scale).
pub const TRAIT_MAX: u8 = 24;

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("incomplete role card: {0}")]
    IncompleteRoleCard(&'static str),
    #[error("profile out of range: {trait_name}={value} (allowed 0..={max})", max = TRAIT_MAX)]
    ProfileOutOfRange { trait_name: &'static str, value: i64 },
    #[error("profile must not be the zero vector")]
    ZeroProfile,
    #[error("unknown rule category: {0}")]
    UnknownRuleCategory(String),
    #[error("unknown role: {0}")]
    UnknownRole(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Stable identifier of a role, e.g. `alice`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleId(String);

impl RoleId {
    pub fn new(id: impl Into<String>) -> Self {
        RoleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoleId {
    fn from(s: &str) -> Self {
        RoleId(s.to_string())
    }
}

/// The five traits in canonical (O, C, E, A, N) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BigFiveTrait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl BigFiveTrait {
    pub const ALL: [BigFiveTrait; 5] = [
        BigFiveTrait::Openness,
        BigFiveTrait::Conscientiousness,
        BigFiveTrait::Extraversion,
        BigFiveTrait::Agreeableness,
        BigFiveTrait::Neuroticism,
    ];

    /// Identifier used for subscales and serialized fields.
    pub fn key(self) -> &'static str {
        match self {
            BigFiveTrait::Openness => "openness",
            BigFiveTrait::Conscientiousness => "conscientiousness",
            BigFiveTrait::Extraversion => "extraversion",
            BigFiveTrait::Agreeableness => "agreeableness",
            BigFiveTrait::Neuroticism => "neuroticism",
        }
    }
}

/// Target trait scores on the 0–24 NEO-FFI-30 sum scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct BigFiveProfile {
    scores: [u8; 5],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawProfile {
    openness: i64,
    conscientiousness: i64,
    extraversion: i64,
    agreeableness: i64,
    neuroticism: i64,
}

impl TryFrom<RawProfile> for BigFiveProfile {
    type Error = PersonaError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        BigFiveProfile::from_scores([
            raw.openness,
            raw.conscientiousness,
            raw.extraversion,
            raw.agreeableness,
            raw.neuroticism,
        ])
    }
}

impl From<BigFiveProfile> for RawProfile {
    fn from(p: BigFiveProfile) -> Self {
        let [o, c, e, a, n] = p.scores.map(i64::from);
        RawProfile {
            openness: o,
            conscientiousness: c,
            extraversion: e,
            agreeableness: a,
            neuroticism: n,
        }
    }
}

impl BigFiveProfile {
    pub fn new(
        openness: i64,
        conscientiousness: i64,
        extraversion: i64,
        agreeableness: i64,
        neuroticism: i64,
    ) -> Result<Self, PersonaError> {
        Self::from_scores([
            openness,
            conscientiousness,
            extraversion,
            agreeableness,
            neuroticism,
        ])
    }

    pub fn from_scores(scores: [i64; 5]) -> Result<Self, PersonaError> {
        let mut out = [0u8; 5];
        for (i, (&v, t)) in scores.iter().zip(BigFiveTrait::ALL).enumerate() {
            if !(0..=i64::from(TRAIT_MAX)).contains(&v) {
                return Err(PersonaError::ProfileOutOfRange {
                    trait_name: t.key(),
                    value: v,
                });
            }
            out[i] = v as u8;
        }
        if out.iter().all(|&v| v == 0) {
            return Err(PersonaError::ZeroProfile);
        }
        Ok(BigFiveProfile { scores: out })
    }

    pub fn score(&self, t: BigFiveTrait) -> u8 {
        self.scores[t as usize]
    }

    pub fn scores(&self) -> [u8; 5] {
        self.scores
    }

    /// Ordered (O, C, E, A, N) real vector for the fidelity statistics.
    pub fn trait_vector(&self) -> [f64; 5] {
        self.scores.map(f64::from)
    }
}

/// The five categories of shared-living conflict covered by the house rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategoryName {
    Noise,
    Cleanliness,
    KitchenUse,
    GuestPolicy,
    PersonalBoundaries,
}

impl RuleCategoryName {
    pub const ALL: [RuleCategoryName; 5] = [
        RuleCategoryName::Noise,
        RuleCategoryName::Cleanliness,
        RuleCategoryName::KitchenUse,
        RuleCategoryName::GuestPolicy,
        RuleCategoryName::PersonalBoundaries,
    ];

    pub fn key(self) -> &'static str {
        match self {
            RuleCategoryName::Noise => "noise",
            RuleCategoryName::Cleanliness => "cleanliness",
            RuleCategoryName::KitchenUse => "kitchen_use",
            RuleCategoryName::GuestPolicy => "guest_policy",
            RuleCategoryName::PersonalBoundaries => "personal_boundaries",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            RuleCategoryName::Noise => "Noise",
            RuleCategoryName::Cleanliness => "Cleanliness",
            RuleCategoryName::KitchenUse => "Kitchen use",
            RuleCategoryName::GuestPolicy => "Guest policy",
            RuleCategoryName::PersonalBoundaries => "Personal boundaries",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PersonaError> {
        Self::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| PersonaError::UnknownRuleCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCategory {
    pub name: RuleCategoryName,
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub background: String,
    pub objective: String,
    pub house_rules: Vec<RuleCategory>,
    #[serde(default)]
    pub constraints: Vec<String>,
}

impl TaskSpec {
    pub fn from_toml(document: &str) -> Result<Self, PersonaError> {
        let task: TaskSpec =
            toml::from_str(document).map_err(|e| PersonaError::Malformed(e.message().to_string()))?;
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if self.background.trim().is_empty() || self.objective.trim().is_empty() {
            return Err(PersonaError::InvalidScenario(
                "task background and objective must be non-empty".into(),
            ));
        }
        let mut seen = Vec::new();
        for category in &self.house_rules {
            if seen.contains(&category.name) {
                return Err(PersonaError::InvalidScenario(format!(
                    "duplicate rule category {}",
                    category.name.key()
                )));
            }
            seen.push(category.name);
        }
        Ok(())
    }

    pub fn has_category(&self, name: RuleCategoryName) -> bool {
        self.house_rules.iter().any(|c| c.name == name)
    }
}

/// Closed sets of emotion and gesture identifiers the avatars may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVocabulary")]
pub struct BehaviorVocabulary {
    emotions: Vec<String>,
    gestures: Vec<String>,
}

#[derive(Deserialize)]
struct RawVocabulary {
    emotions: Vec<String>,
    gestures: Vec<String>,
}

impl TryFrom<RawVocabulary> for BehaviorVocabulary {
    type Error = PersonaError;

    fn try_from(raw: RawVocabulary) -> Result<Self, Self::Error> {
        BehaviorVocabulary::new(raw.emotions, raw.gestures)
    }
}

impl BehaviorVocabulary {
    pub const NEUTRAL_EMOTION: &'static str = "neutral";
    pub const IDLE_GESTURE: &'static str = "idle";

    pub fn new<E, G>(emotions: E, gestures: G) -> Result<Self, PersonaError>
    where
        E: IntoIterator,
        E::Item: Into<String>,
        G: IntoIterator,
        G::Item: Into<String>,
    {
        let emotions = normalize_set(emotions, "emotions")?;
        let gestures = normalize_set(gestures, "gestures")?;
        if !emotions.iter().any(|e| e == Self::NEUTRAL_EMOTION) {
            return Err(PersonaError::InvalidVocabulary(
                "emotions must include \"neutral\"".into(),
            ));
        }
        if !gestures.iter().any(|g| g == Self::IDLE_GESTURE) {
            return Err(PersonaError::InvalidVocabulary(
                "gestures must include \"idle\"".into(),
            ));
        }
        Ok(BehaviorVocabulary { emotions, gestures })
    }

    pub fn from_toml(document: &str) -> Result<Self, PersonaError> {
        toml::from_str(document).map_err(|e| PersonaError::Malformed(e.message().to_string()))
    }

    pub fn emotions(&self) -> &[String] {
        &self.emotions
    }

    pub fn gestures(&self) -> &[String] {
        &self.gestures
    }

    pub fn has_emotion(&self, e: &str) -> bool {
        self.emotions.iter().any(|x| x == e)
    }

    pub fn has_gesture(&self, g: &str) -> bool {
        self.gestures.iter().any(|x| x == g)
    }
}

impl Default for BehaviorVocabulary {
    fn default() -> Self {
        BehaviorVocabulary::new(
            ["neutral", "happy", "annoyed", "thoughtful", "surprised", "concerned"],
            ["idle", "nod", "shake_head", "shrug", "point", "arms_crossed"],
        )
        .expect("default vocabulary is valid")
    }
}

fn normalize_set<I>(items: I, what: &str) -> Result<Vec<String>, PersonaError>
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let mut out: Vec<String> = Vec::new();
    for item in items {
        let item: String = item.into();
        let item = item.trim().to_ascii_lowercase();
        let valid = !item.is_empty()
            && item
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if !valid {
            return Err(PersonaError::InvalidVocabulary(format!(
                "{what}: invalid identifier {item:?}"
            )));
        }
        if out.contains(&item) {
            return Err(PersonaError::InvalidVocabulary(format!(
                "{what}: duplicate identifier {item:?}"
            )));
        }
        out.push(item);
    }
    if out.is_empty() {
        return Err(PersonaError::InvalidVocabulary(format!("{what} must be non-empty")));
    }
    Ok(out)
}

/// Narrative persona package handed to whoever plays a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleCard {
    pub role_id: RoleId,
    pub display_name: String,
    pub basic_info: String,
    pub lifestyle_log: Vec<String>,
    pub hidden_motivation: String,
    pub stance_on_house_rules: BTreeMap<RuleCategoryName, String>,
    pub profile: BigFiveProfile,
    #[serde(default)]
    pub voice_hint: String,
}

#[derive(Deserialize)]
struct RawRoleCard {
    role_id: Option<String>,
    display_name: Option<String>,
    basic_info: Option<String>,
    lifestyle_log: Option<Vec<String>>,
    hidden_motivation: Option<String>,
    stance_on_house_rules: Option<BTreeMap<String, String>>,
    profile: Option<RawProfile>,
    voice_hint: Option<String>,
}

fn required_text(value: Option<String>, section: &'static str) -> Result<String, PersonaError> {
    match value {
        Some(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        _ => Err(PersonaError::IncompleteRoleCard(section)),
    }
}

impl RoleCard {
    /// Parses a role-card document (TOML) and checks every invariant that
    /// does not depend on the surrounding scenario.
    pub fn from_toml(document: &str) -> Result<Self, PersonaError> {
        let raw: RawRoleCard =
            toml::from_str(document).map_err(|e| PersonaError::Malformed(e.message().to_string()))?;

        let role_id = required_text(raw.role_id, "role_id")?;
        let display_name = required_text(raw.display_name, "display_name")?;
        let basic_info = required_text(raw.basic_info, "basic_info")?;
        let lifestyle_log: Vec<String> = raw
            .lifestyle_log
            .unwrap_or_default()
            .into_iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if lifestyle_log.is_empty() {
            return Err(PersonaError::IncompleteRoleCard("lifestyle_log"));
        }
        let hidden_motivation = required_text(raw.hidden_motivation, "hidden_motivation")?;

        let stances = raw.stance_on_house_rules.unwrap_or_default();
        let mut stance_on_house_rules = BTreeMap::new();
        for (key, stance) in stances {
            let category = RuleCategoryName::parse(&key)?;
            if !stance.trim().is_empty() {
                stance_on_house_rules.insert(category, stance.trim().to_string());
            }
        }
        if stance_on_house_rules.is_empty() {
            return Err(PersonaError::IncompleteRoleCard("stance_on_house_rules"));
        }

        let profile = raw
            .profile
            .ok_or(PersonaError::IncompleteRoleCard("profile"))?
            .try_into()?;

        if !role_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(PersonaError::Malformed(format!("invalid role_id {role_id:?}")));
        }

        Ok(RoleCard {
            role_id: RoleId(role_id),
            display_name,
            basic_info,
            lifestyle_log,
            hidden_motivation,
            stance_on_house_rules,
            profile,
            voice_hint: raw.voice_hint.unwrap_or_default(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("role card serializes")
    }

    /// Public-facing summary; never carries the hidden motivation.
    pub fn basics(&self) -> RoleBasics {
        RoleBasics {
            role_id: self.role_id.clone(),
            display_name: self.display_name.clone(),
            basic_info: self.basic_info.clone(),
        }
    }
}

/// What a participant may know about a counterpart role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleBasics {
    pub role_id: RoleId,
    pub display_name: String,
    pub basic_info: String,
}

pub fn load_role_card(document: &str) -> Result<RoleCard, PersonaError> {
    RoleCard::from_toml(document)
}

pub fn trait_vector(profile: &BigFiveProfile) -> [f64; 5] {
    profile.trait_vector()
}
