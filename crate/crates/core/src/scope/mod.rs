//! Vector retrieval over a contract's chunks and the phrase scope
//! generations built on it: in-context definitions, persona scenarios and
//! question answers.

mod index;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotator::{extract_json_object, AnnotatorError, Persona};
use crate::corpus::Span;
use crate::gateway::{
    bindings, render_prompt, Gateway, GatewayError, GatewayMode, RenderedPrompt, TemplateId,
    ANSWER_EXAMPLES, DEFINITION_EXAMPLES,
};

pub use index::{build_index, cosine, rank, IndexEntry, VectorIndex, INDEX_FORMAT, INDEX_VERSION};

pub const DEFAULT_K: usize = 15;
pub const SCENARIO_WORD_LIMIT: usize = 50;

#[derive(Debug, Clone, Error)]
pub enum ScopeError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunk(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("unknown chunk `{0}`")]
    UnknownChunk(String),
    #[error("unparseable completion: {0}")]
    UnparseableCompletion(String),
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ScopeError {
    pub fn is_fatal(&self, mode: GatewayMode) -> bool {
        match self {
            ScopeError::Gateway(GatewayError::ReplayMiss { .. }) => mode.is_strict(),
            ScopeError::Gateway(_) => true,
            _ => false,
        }
    }
}

impl From<AnnotatorError> for ScopeError {
    fn from(e: AnnotatorError) -> Self {
        match e {
            AnnotatorError::Gateway(g) => ScopeError::Gateway(g),
            other => ScopeError::UnparseableCompletion(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub score: f64,
}

/// Chunk id to chunk text, for every chunk in the index.
pub type ChunkTexts = BTreeMap<String, String>;

pub fn retrieval_query(phrase: &str, context: &str) -> String {
    format!("What does {phrase} refer to in the sentence: {context}")
}

pub fn retrieve(
    gw: &Gateway,
    index: &VectorIndex,
    phrase: &str,
    context: &str,
    k: usize,
) -> Result<Vec<ScoredChunk>, ScopeError> {
    retrieve_query(gw, index, &retrieval_query(phrase, context), k)
}

pub fn retrieve_query(
    gw: &Gateway,
    index: &VectorIndex,
    query: &str,
    k: usize,
) -> Result<Vec<ScoredChunk>, ScopeError> {
    if index.is_empty() {
        return Err(ScopeError::EmptyIndex);
    }
    let q = gw.embed(query)?;
    rank(index, &q.values, k)
}

/// The sentence of `text` that contains `span`, used as the phrase's
/// surrounding context.
pub fn phrase_context(text: &str, span: Span) -> &str {
    let is_end = |c: char| matches!(c, '.' | '!' | '?' | '\n');
    let start = text[..span.start]
        .char_indices()
        .rev()
        .find(|&(_, c)| is_end(c))
        .map_or(0, |(i, c)| i + c.len_utf8());
    let end = text[span.end..]
        .char_indices()
        .find(|&(_, c)| is_end(c))
        .map_or(text.len(), |(i, c)| span.end + i + if c == '\n' { 0 } else { c.len_utf8() });
    text[start..end].trim()
}

fn format_context(retrieved: &[ScoredChunk], texts: &ChunkTexts) -> Result<String, ScopeError> {
    retrieved
        .iter()
        .map(|r| {
            texts
                .get(&r.chunk_id)
                .map(|t| format!("[{}]\n{}", r.chunk_id, t))
                .ok_or_else(|| ScopeError::UnknownChunk(r.chunk_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|blocks| blocks.join("\n\n"))
}

const JSON_REMINDER: &str = "Your previous answer was not valid. Reply with only the JSON object in the requested output format.";

fn complete_parsed<T>(
    gw: &Gateway,
    prompt: &RenderedPrompt,
    parse: impl Fn(&str) -> Result<T, ScopeError>,
) -> Result<T, ScopeError> {
    let params = gw.params_for(prompt.template_id);
    match parse(&gw.complete(prompt, &params)?) {
        Err(ScopeError::UnparseableCompletion(_)) => parse(&gw.complete(&prompt.retry(JSON_REMINDER), &params)?),
        other => other,
    }
}

fn text_field(raw: &str, key: &str) -> Result<(serde_json::Map<String, Value>, String), ScopeError> {
    let map = extract_json_object(raw)?;
    let text = crate::annotator::json_field(&map, key)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ScopeError::UnparseableCompletion(format!("missing or empty `{key}`")))?
        .to_string();
    Ok((map, text))
}

/// Keeps only references inside the retrieved set, in first-cited order.
pub fn validate_refs(cited: &[String], retrieved: &[ScoredChunk]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in cited {
        let id = raw.trim().trim_start_matches('[').trim_end_matches(']');
        if !retrieved.iter().any(|r| r.chunk_id == id) {
            tracing::warn!(reference = %raw, "reference outside the retrieved set; dropped");
        } else if !out.iter().any(|o| o == id) {
            out.push(id.to_string());
        }
    }
    out
}

fn parse_cited(raw: &str, key: &str, retrieved: &[ScoredChunk]) -> Result<(String, Vec<String>), ScopeError> {
    let (map, text) = text_field(raw, key)?;
    let cited: Vec<String> = match crate::annotator::json_field(&map, "References") {
        Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).map(str::to_string).collect(),
        Some(Value::Null) | None => Vec::new(),
        Some(_) => return Err(ScopeError::UnparseableCompletion("`References` is not a list".into())),
    };
    Ok((text, validate_refs(&cited, retrieved)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Definition {
    pub definition: String,
    pub refs: Vec<String>,
    pub retrieved: Vec<ScoredChunk>,
}

pub fn define_phrase(
    gw: &Gateway,
    index: &VectorIndex,
    texts: &ChunkTexts,
    phrase: &str,
    context: &str,
    k: usize,
) -> Result<Definition, ScopeError> {
    if phrase.trim().is_empty() {
        return Err(ScopeError::EmptyInput("phrase"));
    }
    let retrieved = retrieve(gw, index, phrase, context, k)?;
    let ctx = format_context(&retrieved, texts)?;
    let prompt = render_prompt(
        TemplateId::Define,
        &bindings([
            ("examples", DEFINITION_EXAMPLES),
            ("retrieved_context", ctx.as_str()),
            ("phrase", phrase),
            ("context", context),
        ]),
    )?;
    let (definition, refs) = complete_parsed(gw, &prompt, |raw| parse_cited(raw, "Definition", &retrieved))?;
    Ok(Definition {
        definition,
        refs,
        retrieved,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub text: String,
    pub word_count: usize,
    pub over_length: bool,
}

pub fn generate_scenario(
    gw: &Gateway,
    phrase: &str,
    context: &str,
    definition: &str,
    persona: &Persona,
    platform: &str,
) -> Result<Scenario, ScopeError> {
    if definition.trim().is_empty() {
        return Err(ScopeError::EmptyInput("definition"));
    }
    let rendered = persona.render();
    let prompt = render_prompt(
        TemplateId::Scenario,
        &bindings([
            ("platform", platform),
            ("persona", rendered.as_str()),
            ("phrase", phrase),
            ("context", context),
            ("definition", definition),
        ]),
    )?;
    let text = complete_parsed(gw, &prompt, |raw| text_field(raw, "Story").map(|(_, t)| t))?;
    let word_count = text.split_whitespace().count();
    Ok(Scenario {
        over_length: word_count > SCENARIO_WORD_LIMIT,
        word_count,
        text,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question: String,
    pub answer_text: String,
    pub refs: Vec<String>,
    pub retrieved: Vec<ScoredChunk>,
}

pub fn answer_question(
    gw: &Gateway,
    index: &VectorIndex,
    texts: &ChunkTexts,
    question: &str,
    phrase: &str,
    context: &str,
    k: usize,
) -> Result<Answer, ScopeError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(ScopeError::EmptyInput("question"));
    }
    let retrieved = retrieve_query(gw, index, question, k)?;
    let ctx = format_context(&retrieved, texts)?;
    let prompt = render_prompt(
        TemplateId::Ask,
        &bindings([
            ("examples", ANSWER_EXAMPLES),
            ("retrieved_context", ctx.as_str()),
            ("question", question),
            ("phrase", phrase),
            ("context", context),
        ]),
    )?;
    let (answer_text, refs) = complete_parsed(gw, &prompt, |raw| parse_cited(raw, "Answer", &retrieved))?;
    Ok(Answer {
        question: question.to_string(),
        answer_text,
        refs,
        retrieved,
    })
}

/// Definition plus scenario for one phrase occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseScopeResult {
    pub phrase: String,
    pub context_chunk_id: String,
    pub span: Span,
    pub persona_id: String,
    pub definition: String,
    pub definition_refs: Vec<String>,
    /// Ids of the chunks retrieved for the definition query.
    pub retrieved: Vec<String>,
    pub scenario: String,
    pub scenario_word_count: usize,
    pub over_length: bool,
}

pub struct ScopeRequest<'a> {
    pub chunk_id: &'a str,
    pub chunk_text: &'a str,
    pub span: Span,
    pub persona: &'a Persona,
    pub platform: &'a str,
    pub k: usize,
}

pub fn generate_phrase_scope(
    gw: &Gateway,
    index: &VectorIndex,
    texts: &ChunkTexts,
    req: &ScopeRequest<'_>,
) -> Result<PhraseScopeResult, ScopeError> {
    let phrase = req.span.slice(req.chunk_text).trim();
    let context = phrase_context(req.chunk_text, req.span);
    let def = define_phrase(gw, index, texts, phrase, context, req.k)?;
    let scenario = generate_scenario(gw, phrase, context, &def.definition, req.persona, req.platform)?;
    Ok(PhraseScopeResult {
        phrase: phrase.to_string(),
        context_chunk_id: req.chunk_id.to_string(),
        span: req.span,
        persona_id: req.persona.persona_id.clone(),
        definition: def.definition,
        definition_refs: def.refs,
        retrieved: def.retrieved.into_iter().map(|r| r.chunk_id).collect(),
        scenario: scenario.text,
        scenario_word_count: scenario.word_count,
        over_length: scenario.over_length,
    })
}

#[cfg(test)]
mod tests;
