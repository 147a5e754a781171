//! Jargon and vague-phrase identification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::classify::{extract_json_object, field, JSON_REMINDER};
use super::{complete_with_retry, AnnotatorError};
use crate::corpus::{Chunk, Span};
use crate::gateway::{bindings, render_prompt, Gateway, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseKind {
    Jargon,
    Vague,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseAnnotation {
    pub chunk_id: String,
    pub span: Span,
    pub surface_text: String,
    pub kinds: BTreeSet<PhraseKind>,
}

pub fn parse_phrase_list(raw: &str, key: &str) -> Result<Vec<String>, AnnotatorError> {
    let map = extract_json_object(raw)?;
    match field(&map, key) {
        Some(Value::Array(items)) => Ok(items
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect()),
        Some(_) => Err(AnnotatorError::UnparseableCompletion(format!("`{key}` is not a list"))),
        None => Err(AnnotatorError::UnparseableCompletion(format!("missing `{key}`"))),
    }
}

/// Anchors returned phrases (leftmost, case-sensitive) and merges them:
/// identical spans union their kinds, overlapping spans keep the longer.
pub fn merge_phrases(chunk: &Chunk, found: &[(PhraseKind, Vec<String>)]) -> Vec<PhraseAnnotation> {
    let mut by_span: BTreeMap<Span, BTreeSet<PhraseKind>> = BTreeMap::new();
    for (kind, phrases) in found {
        for phrase in phrases {
            if phrase.trim().is_empty() {
                continue;
            }
            match chunk.text.find(phrase.as_str()) {
                Some(i) => {
                    by_span.entry(Span::new(i, i + phrase.len())).or_default().insert(*kind);
                }
                None => tracing::warn!(chunk = %chunk.chunk_id, phrase = %phrase, "phrase not found verbatim in chunk; dropped"),
            }
        }
    }
    let mut candidates: Vec<(Span, BTreeSet<PhraseKind>)> = by_span.into_iter().collect();
    candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.start.cmp(&b.0.start)));
    let mut kept: Vec<(Span, BTreeSet<PhraseKind>)> = Vec::new();
    for (span, kinds) in candidates {
        if !kept.iter().any(|(k, _)| k.overlaps(&span)) {
            kept.push((span, kinds));
        }
    }
    kept.sort_by_key(|(s, _)| *s);
    kept.into_iter()
        .map(|(span, kinds)| PhraseAnnotation {
            chunk_id: chunk.chunk_id.clone(),
            span,
            surface_text: span.slice(&chunk.text).to_string(),
            kinds,
        })
        .collect()
}

pub fn identify_phrases(gw: &Gateway, chunk: &Chunk) -> Result<Vec<PhraseAnnotation>, AnnotatorError> {
    if chunk.text.trim().is_empty() {
        return Err(AnnotatorError::EmptyInput("chunk"));
    }
    let mut found = Vec::new();
    for (id, key, kind) in [
        (TemplateId::IdentifyJargon, "Jargon", PhraseKind::Jargon),
        (TemplateId::IdentifyVague, "Vague", PhraseKind::Vague),
    ] {
        let prompt = render_prompt(id, &bindings([("chunk", chunk.text.as_str())]))?;
        let list = complete_with_retry(gw, &prompt, JSON_REMINDER, |raw| parse_phrase_list(raw, key))?;
        found.push((kind, list));
    }
    Ok(merge_phrases(chunk, &found))
}
