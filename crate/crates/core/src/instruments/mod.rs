//! Likert questionnaires: definitions, scoring, and administration to a
//! persona through the gateway.

pub mod bundled;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatMessage, Gateway, GatewayError, GenerationRequest, Sampling};
use crate::persona::{compile_persona_prompt, RoleCard};

/// Extra attempts per item when no usable integer can be extracted.
pub const ITEM_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("unknown subscale: {0}")]
    UnknownSubscale(String),
    #[error("invalid scale: min {min} must be below max {max}")]
    InvalidScale { min: i32, max: i32 },
    #[error("subscale {0} has no items")]
    EmptySubscale(String),
    #[error("duplicate identifier: {0}")]
    Duplicate(String),
    #[error("malformed instrument: {0}")]
    Malformed(String),
    #[error("incomplete response: missing {}", .0.join(", "))]
    IncompleteResponse(Vec<String>),
    #[error("answer out of range: {item_id}={answer} (allowed {min}..={max})")]
    AnswerOutOfRange {
        item_id: String,
        answer: i32,
        min: i32,
        max: i32,
    },
    #[error("unknown item: {0}")]
    UnknownItem(String),
    #[error("response is for instrument {actual}, expected {expected}")]
    InstrumentMismatch { expected: String, actual: String },
    #[error("item extraction failed: {0}")]
    ItemExtractionFailed(String),
    #[error(transparent)]
    Generation(#[from] GatewayError),
    #[error("unknown instrument: {0}")]
    UnknownInstrument(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub min: i32,
    pub max: i32,
    #[serde(default)]
    pub anchors: Vec<String>,
}

impl Scale {
    pub fn contains(&self, answer: i32) -> bool {
        (self.min..=self.max).contains(&answer)
    }

    /// Reverse-keying map `r' = (min + max) − r`; an involution on the scale.
    pub fn reverse(&self, answer: i32) -> i32 {
        self.min + self.max - answer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscale {
    pub subscale_id: String,
    pub name: String,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub text: String,
    pub subscale_id: String,
    #[serde(default)]
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub instrument_id: String,
    pub name: String,
    pub scale: Scale,
    pub subscales: Vec<Subscale>,
    pub items: Vec<Item>,
}

impl Instrument {
    pub fn from_toml(document: &str) -> Result<Self, InstrumentError> {
        let inst: Instrument =
            toml::from_str(document).map_err(|e| InstrumentError::Malformed(e.message().to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, InstrumentError> {
        let doc = std::fs::read_to_string(path).map_err(|source| InstrumentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&doc)
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        if self.scale.min >= self.scale.max {
            return Err(InstrumentError::InvalidScale {
                min: self.scale.min,
                max: self.scale.max,
            });
        }
        let mut subscale_ids = BTreeSet::new();
        for s in &self.subscales {
            if !subscale_ids.insert(s.subscale_id.as_str()) {
                return Err(InstrumentError::Duplicate(s.subscale_id.clone()));
            }
        }
        let mut item_ids = BTreeSet::new();
        for item in &self.items {
            if !subscale_ids.contains(item.subscale_id.as_str()) {
                return Err(InstrumentError::UnknownSubscale(item.subscale_id.clone()));
            }
            if !item_ids.insert(item.item_id.as_str()) {
                return Err(InstrumentError::Duplicate(item.item_id.clone()));
            }
        }
        for s in &self.subscales {
            if !self.items.iter().any(|i| i.subscale_id == s.subscale_id) {
                return Err(InstrumentError::EmptySubscale(s.subscale_id.clone()));
            }
        }
        Ok(())
    }

    pub fn subscale(&self, id: &str) -> Option<&Subscale> {
        self.subscales.iter().find(|s| s.subscale_id == id)
    }

    pub fn items_of<'a>(&'a self, subscale_id: &'a str) -> impl Iterator<Item = &'a Item> + 'a {
        self.items.iter().filter(move |i| i.subscale_id == subscale_id)
    }

    /// The raw answer that scores as `keyed` on `item` (undoes reverse-keying).
    pub fn raw_answer_for(&self, item: &Item, keyed: i32) -> i32 {
        if item.reversed {
            self.scale.reverse(keyed)
        } else {
            keyed
        }
    }
}

pub fn load_instrument(document: &str) -> Result<Instrument, InstrumentError> {
    Instrument::from_toml(document)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub instrument_id: String,
    pub respondent_id: String,
    pub answers: BTreeMap<String, i32>,
}

/// Aggregated score per subscale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubscaleScores(pub BTreeMap<String, f64>);

impl SubscaleScores {
    pub fn get(&self, subscale_id: &str) -> Option<f64> {
        self.0.get(subscale_id).copied()
    }
}

/// Checks completeness and range, applies reverse-keying, aggregates.
pub fn score_response(instrument: &Instrument, response: &ResponseSet) -> Result<SubscaleScores, InstrumentError> {
    if response.instrument_id != instrument.instrument_id {
        return Err(InstrumentError::InstrumentMismatch {
            expected: instrument.instrument_id.clone(),
            actual: response.instrument_id.clone(),
        });
    }
    let missing: Vec<String> = instrument
        .items
        .iter()
        .filter(|i| !response.answers.contains_key(&i.item_id))
        .map(|i| i.item_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(InstrumentError::IncompleteResponse(missing));
    }
    if let Some(extra) = response
        .answers
        .keys()
        .find(|k| !instrument.items.iter().any(|i| &i.item_id == *k))
    {
        return Err(InstrumentError::UnknownItem(extra.clone()));
    }

    let mut totals: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for item in &instrument.items {
        let answer = response.answers[&item.item_id];
        if !instrument.scale.contains(answer) {
            return Err(InstrumentError::AnswerOutOfRange {
                item_id: item.item_id.clone(),
                answer,
                min: instrument.scale.min,
                max: instrument.scale.max,
            });
        }
        let keyed = if item.reversed {
            instrument.scale.reverse(answer)
        } else {
            answer
        };
        let slot = totals.entry(item.subscale_id.as_str()).or_insert((0.0, 0));
        slot.0 += f64::from(keyed);
        slot.1 += 1;
    }

    let scores = instrument
        .subscales
        .iter()
        .map(|s| {
            let (sum, k) = totals[s.subscale_id.as_str()];
            let score = match s.aggregation {
                Aggregation::Sum => sum,
                Aggregation::Mean => sum / k as f64,
            };
            (s.subscale_id.clone(), score)
        })
        .collect();
    Ok(SubscaleScores(scores))
}

/// First standalone integer in `reply` that lies on `scale`.
///
/// "Standalone" means not glued to letters or other digits and not the
/// integer part of a decimal.
pub fn extract_integer(reply: &str, scale: &Scale) -> Option<i32> {
    let chars: Vec<char> = reply.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let before = start.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i).copied();
        let glued_before = before.is_some_and(|c| c.is_alphanumeric() || c == '.');
        let glued_after = after.is_some_and(|c| c.is_alphanumeric())
            || (after == Some('.') && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()));
        if glued_before || glued_after {
            continue;
        }
        let negative = before == Some('-')
            && start
                .checked_sub(2)
                .map_or(true, |j| !chars[j].is_alphanumeric());
        let digits: String = chars[start..i].iter().collect();
        if let Ok(mut v) = digits.parse::<i32>() {
            if negative {
                v = -v;
            }
            if scale.contains(v) {
                return Some(v);
            }
        }
    }
    None
}

/// The per-item user prompt.
pub fn item_prompt(persona: &RoleCard, item: &Item, scale: &Scale) -> String {
    format!(
        "Answer as {}. Statement: {}. Reply with a single integer from {} to {}.",
        persona.display_name,
        item.text.trim_end_matches('.'),
        scale.min,
        scale.max
    )
}

/// Administers every item to `persona`, each as an independent request.
pub fn administer_to_persona(
    instrument: &Instrument,
    persona: &RoleCard,
    gateway: &Gateway,
    sampling: Sampling,
    respondent_id: &str,
) -> Result<ResponseSet, InstrumentError> {
    let system = compile_persona_prompt(persona);
    let mut answers = BTreeMap::new();
    for item in &instrument.items {
        let request = GenerationRequest::new(
            system.as_str(),
            vec![ChatMessage::user(item_prompt(persona, item, &instrument.scale))],
            sampling,
        )?;
        let mut answer = None;
        for _ in 0..=ITEM_RETRIES {
            let reply = gateway.generate(&request)?;
            if let Some(v) = extract_integer(&reply, &instrument.scale) {
                answer = Some(v);
                break;
            }
        }
        let v = answer.ok_or_else(|| InstrumentError::ItemExtractionFailed(item.item_id.clone()))?;
        answers.insert(item.item_id.clone(), v);
    }
    Ok(ResponseSet {
        instrument_id: instrument.instrument_id.clone(),
        respondent_id: respondent_id.to_string(),
        answers,
    })
}

/// Tabular export: one row per respondent, one column per item in instrument order.
pub fn write_responses_csv<W: Write>(
    instrument: &Instrument,
    responses: &[ResponseSet],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["respondent_id".to_string()];
    header.extend(instrument.items.iter().map(|i| i.item_id.clone()));
    w.write_record(&header)?;
    for r in responses {
        let mut row = vec![r.respondent_id.clone()];
        row.extend(
            instrument
                .items
                .iter()
                .map(|i| r.answers.get(&i.item_id).map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
