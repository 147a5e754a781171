//! Power and relevance labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{complete_with_retry, AnnotatorError, Persona};
use crate::gateway::{bindings, render_prompt, Gateway, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Power {
    Service,
    Neutral,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relevance {
    High,
    Low,
}

impl Power {
    pub const ALL: [Power; 3] = [Power::Service, Power::Neutral, Power::User];

    pub fn as_str(self) -> &'static str {
        match self {
            Power::Service => "Service",
            Power::Neutral => "Neutral",
            Power::User => "User",
        }
    }
}

impl Relevance {
    pub const ALL: [Relevance; 2] = [Relevance::High, Relevance::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::High => "High",
            Relevance::Low => "Low",
        }
    }
}

impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Relevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Power {
    type Err = AnnotatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Power::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AnnotatorError::InvalidCategory(s.to_string()))
    }
}

impl FromStr for Relevance {
    type Err = AnnotatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relevance::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AnnotatorError::InvalidLevel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerLabel {
    pub category: Power,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceLabel {
    pub level: Relevance,
    pub explanation: String,
}

pub const JSON_REMINDER: &str = "Your previous answer was not valid. Reply with only the JSON object in the requested output format, using one of the allowed values.";

/// The outermost `{...}` of a completion, parsed as a JSON object.
pub fn extract_json_object(raw: &str) -> Result<Map<String, Value>, AnnotatorError> {
    let unparseable = |why: String| AnnotatorError::UnparseableCompletion(why);
    let start = raw.find('{').ok_or_else(|| unparseable("no JSON object".into()))?;
    let end = raw.rfind('}').filter(|&e| e > start).ok_or_else(|| unparseable("no JSON object".into()))?;
    match serde_json::from_str::<Value>(&raw[start..=end]) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(unparseable("not a JSON object".into())),
        Err(e) => Err(unparseable(e.to_string())),
    }
}

/// Case-insensitive key lookup.
pub fn field<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key)
        .or_else(|| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}

fn string_field(map: &Map<String, Value>, key: &str) -> Result<String, AnnotatorError> {
    match field(map, key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(AnnotatorError::UnparseableCompletion(format!("`{key}` is not a string"))),
        None => Err(AnnotatorError::UnparseableCompletion(format!("missing `{key}`"))),
    }
}

fn explanation(map: &Map<String, Value>) -> String {
    string_field(map, "Explanation").unwrap_or_default()
}

pub fn parse_power(raw: &str) -> Result<PowerLabel, AnnotatorError> {
    let map = extract_json_object(raw)?;
    Ok(PowerLabel {
        category: string_field(&map, "Category")?.parse()?,
        explanation: explanation(&map),
    })
}

pub fn parse_relevance(raw: &str) -> Result<RelevanceLabel, AnnotatorError> {
    let map = extract_json_object(raw)?;
    Ok(RelevanceLabel {
        level: string_field(&map, "Relevance")?.parse()?,
        explanation: explanation(&map),
    })
}

pub fn classify_power(gw: &Gateway, snippet_text: &str) -> Result<PowerLabel, AnnotatorError> {
    let snippet = snippet_text.trim();
    if snippet.is_empty() {
        return Err(AnnotatorError::EmptyInput("snippet"));
    }
    let prompt = render_prompt(TemplateId::ClassifyPower, &bindings([("snippet", snippet)]))?;
    complete_with_retry(gw, &prompt, JSON_REMINDER, parse_power)
}

pub fn classify_relevance(
    gw: &Gateway,
    snippet_text: &str,
    persona: &Persona,
) -> Result<RelevanceLabel, AnnotatorError> {
    let snippet = snippet_text.trim();
    if snippet.is_empty() {
        return Err(AnnotatorError::EmptyInput("snippet"));
    }
    if !persona.has_content() {
        return Err(AnnotatorError::EmptyInput("persona"));
    }
    let rendered = persona.render();
    let prompt = render_prompt(
        TemplateId::ClassifyRelevance,
        &bindings([("persona", rendered.as_str()), ("snippet", snippet)]),
    )?;
    complete_with_retry(gw, &prompt, JSON_REMINDER, parse_relevance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_with_surrounding_prose() {
        let raw = "Sure!\n```json\n{\"Category\": \"service\", \"Explanation\": \"broad license\"}\n```";
        let label = parse_power(raw).unwrap();
        assert_eq!(label.category, Power::Service);
        assert_eq!(label.explanation, "broad license");
        let r = parse_relevance(r#"{"relevance": "Low", "explanation": "n/a"}"#).unwrap();
        assert_eq!(r.level, Relevance::Low);
    }

    #[test]
    fn rejects_values_outside_the_enums() {
        assert!(matches!(
            parse_power(r#"{"Category": "Service/Neutral/User"}"#),
            Err(AnnotatorError::InvalidCategory(_))
        ));
        assert!(matches!(
            parse_relevance(r#"{"Relevance": "Medium"}"#),
            Err(AnnotatorError::InvalidLevel(_))
        ));
        assert!(matches!(
            parse_power("Service"),
            Err(AnnotatorError::UnparseableCompletion(_))
        ));
        assert!(matches!(
            parse_power(r#"{"Explanation": "x"}"#),
            Err(AnnotatorError::UnparseableCompletion(_))
        ));
    }
}
