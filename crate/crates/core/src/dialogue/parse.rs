//! Extraction and repair of the four-field reply object from raw model text.
//!
//! Fenced code blocks are searched first, then the whole text. Within a
//! region, every `{` is tried as the start of a JSON object and the first
//! object carrying all four fields wins. Unknown gestures and emotions are
//! replaced by the vocabulary's neutral elements; the text is never altered.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{DialogueError, OutputSchema, Utterance};
use crate::persona::{BehaviorVocabulary, RoleCard, RoleId};

/// Roles that may appear as speakers, resolvable by id or display name.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleSet {
    entries: Vec<(RoleId, String)>,
}

impl RoleSet {
    pub fn new(entries: Vec<(RoleId, String)>) -> Self {
        RoleSet { entries }
    }

    pub fn from_cards<'a>(cards: impl IntoIterator<Item = &'a RoleCard>) -> Self {
        RoleSet {
            entries: cards
                .into_iter()
                .map(|c| (c.role_id.clone(), c.display_name.clone()))
                .collect(),
        }
    }

    pub fn resolve(&self, name: &str) -> Option<&RoleId> {
        let name = name.trim();
        self.entries
            .iter()
            .find(|(id, display)| id.as_str().eq_ignore_ascii_case(name) || display.eq_ignore_ascii_case(name))
            .map(|(id, _)| id)
    }

    pub fn display_name(&self, id: &RoleId) -> Option<&str> {
        self.entries
            .iter()
            .find(|(rid, _)| rid == id)
            .map(|(_, d)| d.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = &RoleId> {
        self.entries.iter().map(|(id, _)| id)
    }
}

/// A normalization applied while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", content = "original", rename_all = "snake_case")]
pub enum Repair {
    Gesture(String),
    Emotion(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTurn {
    pub utterance: Utterance,
    pub repairs: Vec<Repair>,
}

/// Byte span of the balanced `{...}` starting at `start`, honoring JSON strings.
fn balanced_object(text: &str, start: usize) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Repairs common near-JSON slips: typographic quotes and trailing commas.
fn relax(segment: &str) -> String {
    let quoted: String = segment
        .chars()
        .map(|c| match c {
            '\u{201c}' | '\u{201d}' => '"',
            other => other,
        })
        .collect();
    let mut out = String::with_capacity(quoted.len());
    let chars: Vec<char> = quoted.chars().collect();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn objects_in(region: &str) -> Vec<Map<String, Value>> {
    let mut found = Vec::new();
    for (start, _) in region.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&region[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => found.push(map),
            _ => {
                if let Some(segment) = balanced_object(region, start) {
                    if let Ok(Value::Object(map)) = serde_json::from_str(&relax(segment)) {
                        found.push(map);
                    }
                }
            }
        }
    }
    found
}

/// Contents of fenced code blocks, in order of appearance.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip an info string such as `json`
        let body_start = after.find('\n').map_or(0, |nl| {
            if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) {
                nl + 1
            } else {
                0
            }
        });
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    blocks
}

/// All JSON objects found in `raw`, fenced blocks first.
pub fn extract_objects(raw: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    for block in fenced_blocks(raw) {
        out.extend(objects_in(block));
    }
    out.extend(objects_in(raw));
    out
}

fn is_candidate(map: &Map<String, Value>) -> bool {
    OutputSchema::FIELDS.iter().all(|f| map.contains_key(*f))
        && map["speaker"].is_string()
        && map["text"].is_string()
}

fn normalize_ident(v: &Value) -> Option<String> {
    v.as_str().map(|s| {
        s.trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect()
    })
}

/// Parses raw model output into a validated utterance.
pub fn parse_turn(raw: &str, vocab: &BehaviorVocabulary, roles: &RoleSet) -> Result<ParsedTurn, DialogueError> {
    let object = extract_objects(raw)
        .into_iter()
        .find(is_candidate)
        .ok_or(DialogueError::Unparseable)?;

    let speaker_raw = object["speaker"].as_str().unwrap_or_default();
    let speaker = roles
        .resolve(speaker_raw)
        .cloned()
        .ok_or_else(|| DialogueError::IllegalSpeaker(speaker_raw.to_string()))?;

    let text = object["text"].as_str().unwrap_or_default().to_string();
    if text.trim().is_empty() {
        return Err(DialogueError::EmptyGeneratedText);
    }

    let mut repairs = Vec::new();
    let gesture = match normalize_ident(&object["gesture"]) {
        Some(g) if vocab.has_gesture(&g) => g,
        _ => {
            repairs.push(Repair::Gesture(value_label(&object["gesture"])));
            BehaviorVocabulary::IDLE_GESTURE.to_string()
        }
    };
    let emotion = match normalize_ident(&object["emotion"]) {
        Some(e) if vocab.has_emotion(&e) => e,
        _ => {
            repairs.push(Repair::Emotion(value_label(&object["emotion"])));
            BehaviorVocabulary::NEUTRAL_EMOTION.to_string()
        }
    };

    Ok(ParsedTurn {
        utterance: Utterance {
            speaker,
            text,
            gesture,
            emotion,
        },
        repairs,
    })
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::Scenario;

    fn setup() -> (BehaviorVocabulary, RoleSet) {
        let s = Scenario::bundled_default();
        (s.vocabulary.clone(), RoleSet::from_cards(&s.roles))
    }

    const BENJI: &str = r#"{"speaker":"Benji","text":"Fine by me.","gesture":"shrug","emotion":"neutral"}"#;

    fn expected() -> Utterance {
        Utterance {
            speaker: RoleId::new("benji"),
            text: "Fine by me.".into(),
            gesture: "shrug".into(),
            emotion: "neutral".into(),
        }
    }

    #[test]
    fn identity_parse() {
        let (v, r) = setup();
        let p = parse_turn(BENJI, &v, &r).unwrap();
        assert_eq!(p.utterance, expected());
        assert!(p.repairs.is_empty());
    }

    #[test]
    fn prose_and_fence_wrapped() {
        let (v, r) = setup();
        let wrapped = format!("Sure! Here is Benji's reply:\n```json\n{BENJI}\n```\nHope that helps.");
        assert_eq!(parse_turn(&wrapped, &v, &r).unwrap().utterance, expected());
        let prose = format!("Benji thinks for a second. {BENJI} That's all.");
        assert_eq!(parse_turn(&prose, &v, &r).unwrap().utterance, expected());
    }

    #[test]
    fn fenced_block_wins_over_earlier_prose_object() {
        let (v, r) = setup();
        let raw = format!(
            "{{\"speaker\":\"Caden\",\"text\":\"draft\",\"gesture\":\"idle\",\"emotion\":\"neutral\"}}\n```\n{BENJI}\n```"
        );
        assert_eq!(parse_turn(&raw, &v, &r).unwrap().utterance, expected());
    }

    #[test]
    fn unknown_behaviors_are_repaired() {
        let (v, r) = setup();
        let raw = r#"{"speaker":"Benji","text":"Ok","gesture":"moonwalk","emotion":"joyful"}"#;
        let p = parse_turn(raw, &v, &r).unwrap();
        assert_eq!(p.utterance.gesture, "idle");
        assert_eq!(p.utterance.emotion, "neutral");
        assert_eq!(p.utterance.text, "Ok");
        assert_eq!(
            p.repairs,
            vec![Repair::Gesture("moonwalk".into()), Repair::Emotion("joyful".into())]
        );
    }

    #[test]
    fn case_and_spacing_normalized_without_repair() {
        let (v, r) = setup();
        let raw = r#"{"speaker":"benji","text":"Hm.","gesture":"Shake head","emotion":" Thoughtful "}"#;
        let p = parse_turn(raw, &v, &r).unwrap();
        assert_eq!(p.utterance.gesture, "shake_head");
        assert_eq!(p.utterance.emotion, "thoughtful");
        assert!(p.repairs.is_empty());
    }

    #[test]
    fn non_string_behavior_fields_are_repaired() {
        let (v, r) = setup();
        let raw = r#"{"speaker":"Caden","text":"Sure.","gesture":null,"emotion":3}"#;
        let p = parse_turn(raw, &v, &r).unwrap();
        assert_eq!((p.utterance.gesture.as_str(), p.utterance.emotion.as_str()), ("idle", "neutral"));
        assert_eq!(p.repairs.len(), 2);
    }

    #[test]
    fn illegal_speaker() {
        let (v, r) = setup();
        let raw = r#"{"speaker":"Dana","text":"Hi","gesture":"idle","emotion":"neutral"}"#;
        assert!(matches!(parse_turn(raw, &v, &r), Err(DialogueError::IllegalSpeaker(s)) if s == "Dana"));
    }

    #[test]
    fn unparseable() {
        let (v, r) = setup();
        for raw in ["", "no json here", r#"{"speaker":"Benji","text":"missing fields"}"#, "{broken"] {
            assert!(matches!(parse_turn(raw, &v, &r), Err(DialogueError::Unparseable)), "{raw}");
        }
    }

    #[test]
    fn empty_text() {
        let (v, r) = setup();
        let raw = r#"{"speaker":"Benji","text":"   ","gesture":"idle","emotion":"neutral"}"#;
        assert!(matches!(parse_turn(raw, &v, &r), Err(DialogueError::EmptyGeneratedText)));
    }

    #[test]
    fn trailing_comma_and_smart_quotes_relaxed() {
        let (v, r) = setup();
        let raw = "{\u{201c}speaker\u{201d}: \"Benji\", \"text\": \"Fine by me.\", \"gesture\": \"shrug\", \"emotion\": \"neutral\",}";
        assert_eq!(parse_turn(raw, &v, &r).unwrap().utterance, expected());
    }

    #[test]
    fn text_kept_verbatim() {
        let (v, r) = setup();
        let raw = r#"{"speaker":"Benji","text":"  Well… {maybe} \"not\".\n","gesture":"x","emotion":"y"}"#;
        let p = parse_turn(raw, &v, &r).unwrap();
        assert_eq!(p.utterance.text, "  Well… {maybe} \"not\".\n");
    }
}
