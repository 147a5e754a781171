//! Chunk annotation: span-aligned summary snippets, power and relevance
//! labels, and jargon/vague phrase identification.

mod align;
mod classify;
mod coverage;
mod persona;
mod phrases;
mod summary;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, Span};
use crate::gateway::{
    bindings, render_prompt, Gateway, GatewayError, GatewayMode, RenderedPrompt, TemplateId,
    SUMMARY_EXAMPLE_OUTPUT,
};

pub use align::{align_reference, align_reference_from, longest_common_substring, AlignStage, Alignment, LCS_ACCEPT_RATIO};
pub use classify::{
    classify_power, classify_relevance, extract_json_object, field as json_field, parse_power, parse_relevance, Power,
    PowerLabel, Relevance, RelevanceLabel,
};
pub use coverage::{repair_coverage, repair_spans, snippet_id, Piece, GAP_THRESHOLD_CHARS};
pub use persona::Persona;
pub use phrases::{identify_phrases, merge_phrases, parse_phrase_list, PhraseAnnotation, PhraseKind};
pub use summary::{parse_summary_completion, truncate_words, word_count, SummaryPair, MAX_SUMMARY_WORDS};

#[derive(Debug, Clone, Error)]
pub enum AnnotatorError {
    #[error("unparseable completion: {0}")]
    UnparseableCompletion(String),
    #[error("completion contained no summary pairs")]
    EmptyResult,
    #[error("alignment failed: longest common run {matched} of {needed} characters")]
    AlignmentFailed { matched: usize, needed: usize },
    #[error("invalid power category `{0}`")]
    InvalidCategory(String),
    #[error("invalid relevance level `{0}`")]
    InvalidLevel(String),
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl AnnotatorError {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            AnnotatorError::UnparseableCompletion(_)
                | AnnotatorError::InvalidCategory(_)
                | AnnotatorError::InvalidLevel(_)
        )
    }

    /// Errors that abort a whole run rather than one chunk.
    pub fn is_fatal(&self, mode: GatewayMode) -> bool {
        match self {
            AnnotatorError::Gateway(GatewayError::ReplayMiss { .. }) => mode.is_strict(),
            AnnotatorError::Gateway(_) => true,
            _ => false,
        }
    }
}

/// Completes `prompt`, re-prompting once if `parse` rejects the output.
pub(crate) fn complete_with_retry<T>(
    gw: &Gateway,
    prompt: &RenderedPrompt,
    reminder: &str,
    parse: impl Fn(&str) -> Result<T, AnnotatorError>,
) -> Result<T, AnnotatorError> {
    let params = gw.params_for(prompt.template_id);
    match parse(&gw.complete(prompt, &params)?) {
        Err(e) if e.is_retryable() => parse(&gw.complete(&prompt.retry(reminder), &params)?),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformationSnippet {
    pub snippet_id: String,
    pub chunk_id: String,
    pub span: Span,
    pub text: String,
    pub oversized_gap: bool,
    pub unsummarized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarySnippet {
    pub snippet_id: String,
    pub summary_text: String,
    pub word_count: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetLabels {
    pub snippet_id: String,
    pub power: PowerLabel,
    pub relevance: RelevanceLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkError {
    pub chunk_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkAnnotation {
    pub chunk_id: String,
    pub snippets: Vec<InformationSnippet>,
    pub summaries: Vec<SummarySnippet>,
    pub labels: Vec<SnippetLabels>,
    pub phrases: Vec<PhraseAnnotation>,
    pub errors: Vec<ChunkError>,
    /// Set when a reference could not be anchored.
    pub needs_reannotation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyAnnotation {
    pub policy_id: String,
    pub persona_id: String,
    pub chunks: Vec<ChunkAnnotation>,
}

/// A snippet joined with its summary and, when labeled, its labels.
#[derive(Debug, Clone, Copy)]
pub struct SnippetView<'a> {
    pub snippet: &'a InformationSnippet,
    pub summary: &'a SummarySnippet,
    pub labels: Option<&'a SnippetLabels>,
}

impl PolicyAnnotation {
    /// All snippets in document order.
    pub fn snippets(&self) -> impl Iterator<Item = SnippetView<'_>> {
        self.chunks.iter().flat_map(|c| {
            c.snippets.iter().zip(&c.summaries).map(move |(snippet, summary)| SnippetView {
                snippet,
                summary,
                labels: c.labels.iter().find(|l| l.snippet_id == snippet.snippet_id),
            })
        })
    }

    pub fn errors(&self) -> impl Iterator<Item = &ChunkError> {
        self.chunks.iter().flat_map(|c| c.errors.iter())
    }
}

/// One extracted summary after the word limit is enforced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedSummary {
    pub summary_text: String,
    pub reference_text: String,
    pub word_count: usize,
    pub truncated: bool,
}

pub fn extract_summary_snippets(gw: &Gateway, chunk: &Chunk) -> Result<Vec<ExtractedSummary>, AnnotatorError> {
    if chunk.text.trim().is_empty() {
        return Err(AnnotatorError::EmptyInput("chunk"));
    }
    let prompt = render_prompt(
        TemplateId::Summarize,
        &bindings([("example_output", SUMMARY_EXAMPLE_OUTPUT), ("chunk", chunk.text.as_str())]),
    )?;
    let params = gw.params_for(TemplateId::Summarize);
    let mut reprompted = false;
    let mut pairs = match parse_summary_completion(&gw.complete(&prompt, &params)?) {
        Err(AnnotatorError::UnparseableCompletion(_)) => {
            reprompted = true;
            parse_summary_completion(&gw.complete(&prompt.retry(summary::FORMAT_REMINDER), &params)?)?
        }
        other => other?,
    };
    let too_long = |ps: &[SummaryPair]| ps.iter().any(|p| word_count(&p.summary_text) > MAX_SUMMARY_WORDS);
    if !reprompted && too_long(&pairs) {
        let retry = gw.complete(&prompt.retry(summary::LENGTH_REMINDER), &params)?;
        if let Ok(shorter) = parse_summary_completion(&retry) {
            pairs = shorter;
        }
    }
    Ok(pairs
        .into_iter()
        .map(|p| {
            let n = word_count(&p.summary_text);
            let truncated = n > MAX_SUMMARY_WORDS;
            let summary_text = if truncated {
                truncate_words(&p.summary_text, MAX_SUMMARY_WORDS)
            } else {
                p.summary_text
            };
            ExtractedSummary {
                word_count: word_count(&summary_text),
                summary_text,
                reference_text: p.reference_text,
                truncated,
            }
        })
        .collect())
}

struct Recorder<'a> {
    chunk_id: &'a str,
    mode: GatewayMode,
    errors: Vec<ChunkError>,
}

impl Recorder<'_> {
    fn record(&mut self, stage: &str, e: AnnotatorError) -> Result<(), AnnotatorError> {
        if e.is_fatal(self.mode) {
            return Err(e);
        }
        tracing::warn!(chunk = self.chunk_id, stage, error = %e, "chunk step failed");
        self.errors.push(ChunkError {
            chunk_id: self.chunk_id.to_string(),
            stage: stage.to_string(),
            message: e.to_string(),
        });
        Ok(())
    }
}

pub fn annotate_chunk(gw: &Gateway, chunk: &Chunk, persona: &Persona) -> Result<ChunkAnnotation, AnnotatorError> {
    let mut rec = Recorder {
        chunk_id: &chunk.chunk_id,
        mode: gw.mode(),
        errors: Vec::new(),
    };
    let mut out = ChunkAnnotation {
        chunk_id: chunk.chunk_id.clone(),
        snippets: Vec::new(),
        summaries: Vec::new(),
        labels: Vec::new(),
        phrases: Vec::new(),
        errors: Vec::new(),
        needs_reannotation: false,
    };
    if chunk.text.trim().is_empty() {
        return Ok(out);
    }

    let extracted = match extract_summary_snippets(gw, chunk) {
        Ok(v) => v,
        Err(e) => {
            rec.record("summarize", e)?;
            Vec::new()
        }
    };
    let mut spans = Vec::new();
    let mut kept = Vec::new();
    let mut min_start = 0;
    for s in extracted {
        match align_reference_from(&chunk.text, &s.reference_text, min_start) {
            Ok(a) => {
                min_start = a.span.end;
                spans.push(a.span);
                kept.push(s);
            }
            Err(e) => {
                out.needs_reannotation = true;
                rec.record("align", e)?;
            }
        }
    }

    let pieces = repair_spans(&chunk.text, &spans);
    out.snippets = coverage::pieces_to_snippets(chunk, &pieces);
    for (snippet, piece) in out.snippets.iter_mut().zip(&pieces) {
        let summary = piece.source.map(|i| &kept[i]);
        out.summaries.push(SummarySnippet {
            snippet_id: snippet.snippet_id.clone(),
            summary_text: summary.map(|s| s.summary_text.clone()).unwrap_or_default(),
            word_count: summary.map_or(0, |s| s.word_count),
            truncated: summary.is_some_and(|s| s.truncated),
        });
        if snippet.unsummarized {
            continue;
        }
        let labels = classify_power(gw, &snippet.text)
            .map_err(|e| ("classify_power", e))
            .and_then(|power| {
                classify_relevance(gw, &snippet.text, persona)
                    .map(|relevance| (power, relevance))
                    .map_err(|e| ("classify_relevance", e))
            });
        match labels {
            Ok((power, relevance)) => out.labels.push(SnippetLabels {
                snippet_id: snippet.snippet_id.clone(),
                power,
                relevance,
            }),
            Err((stage, e)) => {
                snippet.unsummarized = true;
                rec.record(stage, e)?;
            }
        }
    }

    match identify_phrases(gw, chunk) {
        Ok(p) => out.phrases = p,
        Err(e) => rec.record("identify_phrases", e)?,
    }
    out.errors = rec.errors;
    Ok(out)
}

/// Annotates a policy's chunks concurrently, keeping chunk order.
pub fn annotate_policy(
    gw: &Gateway,
    policy_id: &str,
    chunks: &[Chunk],
    persona: &Persona,
) -> Result<PolicyAnnotation, AnnotatorError> {
    if !persona.has_content() {
        return Err(AnnotatorError::EmptyInput("persona"));
    }
    let chunks = chunks
        .par_iter()
        .map(|c| annotate_chunk(gw, c, persona))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolicyAnnotation {
        policy_id: policy_id.to_string(),
        persona_id: persona.persona_id.clone(),
        chunks,
    })
}
