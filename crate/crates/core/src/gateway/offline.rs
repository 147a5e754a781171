//! Deterministic providers that need no network. `HashingEmbedder` is a
//! feature-hashed bag of words; `HeuristicProvider` answers every template
//! with well-formed output derived from its bindings, and can be given
//! per-input overrides. Together they let the fixture caches be recorded
//! reproducibly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{
    CompletionProvider, DecodingParams, EmbeddingProvider, ProviderError, RenderedPrompt,
    TemplateId,
};

pub const HASHING_EMBEDDER_MODEL: &str = "hashing-bow-v1";
pub const HEURISTIC_MODEL: &str = "heuristic-v1";

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from", "how",
    "i", "if", "in", "is", "it", "its", "my", "of", "on", "or", "our", "refer", "sentence", "that",
    "the", "this", "to", "we", "what", "will", "with", "you", "your",
];

pub fn content_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashingEmbedder;

impl HashingEmbedder {
    pub fn vector(text: &str, dimension: usize) -> Vec<f64> {
        let mut v = vec![0.0; dimension];
        for word in content_words(text) {
            let digest = Sha256::digest(word.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % dimension;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn embed(&self, text: &str, _model_id: &str, dimension: usize) -> Result<Vec<f64>, ProviderError> {
        Ok(Self::vector(text, dimension.max(1)))
    }
}

/// A canned completion for one template and one primary input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub template: TemplateId,
    pub key: String,
    pub completion: String,
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicProvider {
    overrides: BTreeMap<(TemplateId, String), String>,
}

const JARGON: &[&str] = &[
    "indemnity", "indemnify", "arbitration", "liability", "royalty-free", "sublicensable",
    "cookies", "Ad identifiers", "Authentication tokens", "perpetual", "irrevocable",
    "governing law", "ServiceY Credit", "chargeback", "escrow",
];

const VAGUE: &[&str] = &[
    "certain other information", "certain information", "third parties", "personal data",
    "aggregated anonymized statistics", "other information", "any reason", "various",
    "generally", "some", "others", "services",
];

const USER_CUES: &[&str] = &[
    "you can", "you may request", "you may opt", "opt out", "right to", "will not sell",
    "does not sell", "will not", "refund", "delete your", "you may cancel",
];

const SERVICE_CUES: &[&str] = &[
    "we may", "we can", "license", "at our discretion", "any reason", "without notice",
    "terminate", "suspend", "not liable", "sole discretion", "indemnify", "waive",
];

impl HeuristicProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_overrides(overrides: impl IntoIterator<Item = Override>) -> Self {
        Self {
            overrides: overrides
                .into_iter()
                .map(|o| ((o.template, o.key), o.completion))
                .collect(),
        }
    }

    /// The binding an override is matched against.
    pub fn override_key(prompt: &RenderedPrompt) -> &str {
        let name = match prompt.template_id {
            TemplateId::Summarize | TemplateId::IdentifyJargon | TemplateId::IdentifyVague => {
                "chunk"
            }
            TemplateId::ClassifyPower | TemplateId::ClassifyRelevance => "snippet",
            TemplateId::Define | TemplateId::Scenario => "phrase",
            TemplateId::Ask => "question",
        };
        prompt.binding(name).unwrap_or("")
    }

    fn generate(&self, p: &RenderedPrompt) -> String {
        let b = |name: &str| p.binding(name).unwrap_or("");
        match p.template_id {
            TemplateId::Summarize => summarize(b("chunk")),
            TemplateId::ClassifyPower => power(b("snippet")),
            TemplateId::ClassifyRelevance => relevance(b("snippet"), b("persona")),
            TemplateId::IdentifyJargon => phrases("Jargon", JARGON, b("chunk")),
            TemplateId::IdentifyVague => phrases("Vague", VAGUE, b("chunk")),
            TemplateId::Define => define(b("phrase"), b("retrieved_context")),
            TemplateId::Scenario => scenario(b("phrase"), b("platform"), b("definition")),
            TemplateId::Ask => ask(b("question"), b("retrieved_context")),
        }
    }
}

impl CompletionProvider for HeuristicProvider {
    fn complete(
        &self,
        prompt: &RenderedPrompt,
        _model_id: &str,
        _params: &DecodingParams,
    ) -> Result<String, ProviderError> {
        let key = (prompt.template_id, Self::override_key(prompt).to_string());
        Ok(self
            .overrides
            .get(&key)
            .cloned()
            .unwrap_or_else(|| self.generate(prompt)))
    }
}

/// Sentences of `text` as slices, each keeping its trailing punctuation.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        let end = i + 1;
        let boundary = matches!(c, b'.' | b'!' | b'?')
            && bytes.get(end).is_none_or(|n| n.is_ascii_whitespace());
        if boundary || c == b'\n' {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn summarize(chunk: &str) -> String {
    sentences(chunk)
        .into_iter()
        .filter(|s| !s.contains('}'))
        .map(|s| {
            let words: Vec<&str> = s
                .split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                .filter(|w| !w.is_empty())
                .take(10)
                .collect();
            format!("- {} {{{s}}}", words.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn power(snippet: &str) -> String {
    let lower = snippet.to_lowercase();
    let hits = |cues: &[&str]| cues.iter().filter(|c| lower.contains(*c)).count();
    let (user, service) = (hits(USER_CUES), hits(SERVICE_CUES));
    let (category, why) = if service > user {
        ("Service", "The term expands the service's control over the user.")
    } else if user > service {
        ("User", "The term gives the user a right or protection.")
    } else {
        ("Neutral", "The term describes a standard condition of use.")
    };
    json!({"Category": category, "Explanation": why}).to_string()
}

fn relevance(snippet: &str, persona: &str) -> String {
    let persona: BTreeSet<String> = content_words(persona).into_iter().collect();
    let shared = content_words(snippet)
        .into_iter()
        .collect::<BTreeSet<_>>()
        .intersection(&persona)
        .count();
    let (level, why) = if shared >= 2 {
        ("High", "The term touches on what the persona does or cares about.")
    } else {
        ("Low", "The term does not bear on the persona's usage or concerns.")
    };
    json!({"Relevance": level, "Explanation": why}).to_string()
}

fn phrases(field: &str, lexicon: &[&str], chunk: &str) -> String {
    let found: Vec<&str> = lexicon.iter().copied().filter(|t| contains_word(chunk, t)).collect();
    json!({ field: found }).to_string()
}

fn contains_word(text: &str, term: &str) -> bool {
    text.match_indices(term).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + term.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Parses `[id]\ntext` blocks separated by blank lines.
fn context_blocks(retrieved: &str) -> Vec<(&str, &str)> {
    retrieved
        .split("\n\n")
        .filter_map(|block| {
            let block = block.trim();
            let rest = block.strip_prefix('[')?;
            let (id, text) = rest.split_once(']')?;
            Some((id, text.trim()))
        })
        .collect()
}

fn best_sentence<'a>(blocks: &[(&'a str, &'a str)], words: &[String]) -> Option<(&'a str, &'a str)> {
    let mut best: Option<(usize, &str, &str)> = None;
    for &(id, text) in blocks {
        for s in sentences(text) {
            let have: BTreeSet<String> = content_words(s).into_iter().collect();
            let score = words.iter().filter(|w| have.contains(*w)).count();
            if score > 0 && best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, id, s));
            }
        }
    }
    best.map(|(_, id, s)| (id, s))
}

fn define(phrase: &str, retrieved: &str) -> String {
    let blocks = context_blocks(retrieved);
    let lower = phrase.to_lowercase();
    let citing: Vec<&str> = blocks
        .iter()
        .filter(|(_, t)| t.to_lowercase().contains(&lower))
        .map(|(id, _)| *id)
        .take(2)
        .collect();
    let words = content_words(phrase);
    match best_sentence(&blocks, &words).filter(|_| !citing.is_empty()) {
        Some((id, s)) => {
            let mut refs = citing.clone();
            if !refs.contains(&id) {
                refs.insert(0, id);
            }
            json!({"Definition": format!("\"{phrase}\" is explained in the terms: {s}"), "References": refs})
                .to_string()
        }
        None => json!({
            "Definition": format!("\"{phrase}\" likely refers to a general category described loosely in the terms."),
            "References": [],
        })
        .to_string(),
    }
}

fn scenario(phrase: &str, platform: &str, definition: &str) -> String {
    let gist: String = definition.split_whitespace().take(20).collect::<Vec<_>>().join(" ");
    json!({"Story": format!(
        "Suppose you use {platform} and \"{phrase}\" applies to you. {gist} You would then need to check how this changes what you can do."
    )})
    .to_string()
}

fn ask(question: &str, retrieved: &str) -> String {
    let blocks = context_blocks(retrieved);
    match best_sentence(&blocks, &content_words(question)) {
        Some((id, s)) => json!({"Answer": format!("According to the terms: {s}"), "References": [id]}).to_string(),
        None => json!({
            "Answer": "The terms do not say this directly, so the answer is unclear.",
            "References": [],
        })
        .to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{bindings, render_prompt};

    #[test]
    fn hashing_embedder_is_deterministic_and_normalized() {
        let a = HashingEmbedder::vector("Delete your data at any time", 64);
        assert_eq!(a, HashingEmbedder::vector("Delete your data at any time", 64));
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(HashingEmbedder::vector("the and", 8).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn heuristic_summaries_reference_verbatim_sentences() {
        let chunk = "We may suspend accounts. You can appeal.\nFees apply.";
        let out = summarize(chunk);
        for line in out.lines() {
            let open = line.find('{').unwrap();
            assert!(chunk.contains(&line[open + 1..line.len() - 1]));
        }
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn overrides_take_precedence() {
        let p = render_prompt(TemplateId::ClassifyPower, &bindings([("snippet", "x")])).unwrap();
        let params = DecodingParams::for_template(TemplateId::ClassifyPower, 0.7);
        let provider = HeuristicProvider::with_overrides([Override {
            template: TemplateId::ClassifyPower,
            key: "x".into(),
            completion: "canned".into(),
        }]);
        assert_eq!(provider.complete(&p, "m", &params).unwrap(), "canned");
    }

    #[test]
    fn phrase_lexicon_respects_word_boundaries() {
        assert!(contains_word("share with third parties.", "third parties"));
        assert!(!contains_word("handsome", "some"));
    }
}
