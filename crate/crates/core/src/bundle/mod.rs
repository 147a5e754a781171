//! The annotation bundle: everything produced for one contract, persisted
//! as canonical JSON and sealed with a content hash.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotator::{Persona, PolicyAnnotation};
use crate::corpus::{Chunk, ContractCorpus, Heading, LinkAnnotation, SourceFormat, Span};
use crate::hashing::{canonical_json, canonical_json_pretty, sha256_hex};
use crate::meter::{compute_meter, PowerMeter, Weighting};
use crate::scope::{ChunkTexts, PhraseScopeResult, VectorIndex};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_FILE: &str = "bundle.json";
pub const CORPUS_FILE: &str = "corpus.json";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub embed_model_id: String,
    pub template_versions: BTreeMap<String, String>,
    pub persona_id: String,
    /// Not part of the content hash.
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionRef {
    pub section_id: String,
    pub heading_path: Vec<Heading>,
    pub char_range: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePolicy {
    pub policy_id: String,
    pub title: String,
    pub format: SourceFormat,
    pub order_index: u32,
    pub sections: Vec<SectionRef>,
    pub chunks: Vec<Chunk>,
    pub links: Vec<LinkAnnotation>,
    pub annotation: PolicyAnnotation,
    pub meter: PowerMeter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBundle {
    pub schema_version: u32,
    pub contract_id: String,
    pub title: String,
    pub provenance: Provenance,
    pub persona: Persona,
    pub policies: Vec<BundlePolicy>,
    /// Lazily generated results keyed by (chunk, span, persona).
    pub phrase_scopes: Vec<PhraseScopeResult>,
    pub content_hash: String,
}

impl AnnotationBundle {
    pub fn build(
        corpus: &ContractCorpus,
        annotations: Vec<PolicyAnnotation>,
        persona: &Persona,
        provenance: Provenance,
    ) -> Result<Self, BundleError> {
        let mut by_policy: BTreeMap<String, PolicyAnnotation> =
            annotations.into_iter().map(|a| (a.policy_id.clone(), a)).collect();
        let policies = corpus
            .policies
            .iter()
            .map(|p| {
                let annotation = by_policy.remove(&p.policy_id).ok_or_else(|| {
                    BundleError::Validation(format!("policy `{}` has no annotation", p.policy_id))
                })?;
                Ok(BundlePolicy {
                    policy_id: p.policy_id.clone(),
                    title: p.title.clone(),
                    format: p.format,
                    order_index: p.order_index,
                    sections: p
                        .sections
                        .iter()
                        .map(|s| SectionRef {
                            section_id: s.section_id.clone(),
                            heading_path: s.heading_path.clone(),
                            char_range: s.char_range,
                        })
                        .collect(),
                    chunks: p.chunks.clone(),
                    links: p.normalized.links.clone(),
                    meter: compute_meter(&annotation, Weighting::Count),
                    annotation,
                })
            })
            .collect::<Result<Vec<_>, BundleError>>()?;
        if let Some(extra) = by_policy.keys().next() {
            return Err(BundleError::Validation(format!("annotation for unknown policy `{extra}`")));
        }
        let mut bundle = AnnotationBundle {
            schema_version: SCHEMA_VERSION,
            contract_id: corpus.contract_id.clone(),
            title: corpus.title.clone(),
            provenance,
            persona: persona.clone(),
            policies,
            phrase_scopes: Vec::new(),
            content_hash: String::new(),
        };
        bundle.seal();
        Ok(bundle)
    }

    /// Hash of the canonical serialization, excluding the hash field itself
    /// and the creation timestamp.
    pub fn compute_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("bundle serializes");
        if let Value::Object(map) = &mut value {
            map.remove("content_hash");
            if let Some(Value::Object(prov)) = map.get_mut("provenance") {
                prov.remove("created_at");
            }
        }
        sha256_hex(canonical_json(&value).expect("value serializes").as_bytes())
    }

    pub fn seal(&mut self) {
        self.phrase_scopes.sort_by_key(scope_key);
        self.content_hash = self.compute_hash();
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }

    pub fn policy(&self, policy_id: &str) -> Option<&BundlePolicy> {
        self.policies.iter().find(|p| p.policy_id == policy_id)
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<(&BundlePolicy, &Chunk)> {
        self.policies
            .iter()
            .find_map(|p| p.chunks.iter().find(|c| c.chunk_id == chunk_id).map(|c| (p, c)))
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.policies.iter().flat_map(|p| p.chunks.iter())
    }

    pub fn chunk_texts(&self) -> ChunkTexts {
        self.chunks().map(|c| (c.chunk_id.clone(), c.text.clone())).collect()
    }

    pub fn phrase_scope(&self, chunk_id: &str, span: Span, persona_id: &str) -> Option<&PhraseScopeResult> {
        self.phrase_scopes
            .iter()
            .find(|s| s.context_chunk_id == chunk_id && s.span == span && s.persona_id == persona_id)
    }

    /// Inserts or replaces a scope result and reseals.
    pub fn upsert_phrase_scope(&mut self, result: PhraseScopeResult) {
        let key = scope_key(&result);
        self.phrase_scopes.retain(|s| scope_key(s) != key);
        self.phrase_scopes.push(result);
        self.seal();
    }

    /// Checks every cross-reference and derived value.
    pub fn validate(&self) -> Result<(), BundleError> {
        let fail = |m: String| Err(BundleError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("unsupported schema version {}", self.schema_version));
        }
        let mut chunk_ids = BTreeSet::new();
        let mut snippet_ids = BTreeSet::new();
        for p in &self.policies {
            let chunks: BTreeMap<&str, &Chunk> = p.chunks.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
            for c in &p.chunks {
                if !chunk_ids.insert(c.chunk_id.as_str()) {
                    return fail(format!("duplicate chunk `{}`", c.chunk_id));
                }
                if c.policy_id != p.policy_id {
                    return fail(format!("chunk `{}` belongs to `{}`", c.chunk_id, c.policy_id));
                }
            }
            if p.annotation.policy_id != p.policy_id {
                return fail(format!("annotation of `{}` names `{}`", p.policy_id, p.annotation.policy_id));
            }
            for ca in &p.annotation.chunks {
                let Some(chunk) = chunks.get(ca.chunk_id.as_str()) else {
                    return fail(format!("annotation references missing chunk `{}`", ca.chunk_id));
                };
                if ca.snippets.len() != ca.summaries.len() {
                    return fail(format!("chunk `{}` snippet and summary tables differ", ca.chunk_id));
                }
                for (s, sum) in ca.snippets.iter().zip(&ca.summaries) {
                    if s.chunk_id != ca.chunk_id || sum.snippet_id != s.snippet_id {
                        return fail(format!("snippet `{}` is misfiled", s.snippet_id));
                    }
                    if !snippet_ids.insert(s.snippet_id.as_str()) {
                        return fail(format!("duplicate snippet `{}`", s.snippet_id));
                    }
                    if s.span.end > chunk.text.len()
                        || !chunk.text.is_char_boundary(s.span.start)
                        || !chunk.text.is_char_boundary(s.span.end)
                        || s.span.slice(&chunk.text) != s.text
                    {
                        return fail(format!("snippet `{}` text does not match its chunk", s.snippet_id));
                    }
                }
                for l in &ca.labels {
                    if !ca.snippets.iter().any(|s| s.snippet_id == l.snippet_id) {
                        return fail(format!("label references missing snippet `{}`", l.snippet_id));
                    }
                }
                for ph in &ca.phrases {
                    if ph.chunk_id != ca.chunk_id
                        || ph.span.end > chunk.text.len()
                        || chunk.text.get(ph.span.start..ph.span.end) != Some(ph.surface_text.as_str())
                    {
                        return fail(format!("phrase `{}` does not match chunk `{}`", ph.surface_text, ca.chunk_id));
                    }
                }
            }
            if compute_meter(&p.annotation, p.meter.weighting) != p.meter {
                return fail(format!("stored meter of `{}` differs from its snippets", p.policy_id));
            }
        }
        for s in &self.phrase_scopes {
            if !chunk_ids.contains(s.context_chunk_id.as_str()) {
                return fail(format!("phrase scope references missing chunk `{}`", s.context_chunk_id));
            }
            if let Some(r) = s.definition_refs.iter().find(|r| !s.retrieved.contains(r) || !chunk_ids.contains(r.as_str())) {
                return fail(format!("definition reference `{r}` is not a retrieved chunk"));
            }
        }
        if !self.content_hash.is_empty() && self.content_hash != self.compute_hash() {
            return fail("content hash does not match".into());
        }
        Ok(())
    }
}

fn scope_key(s: &PhraseScopeResult) -> (String, Span, String) {
    (s.context_chunk_id.clone(), s.span, s.persona_id.clone())
}

/// File layout: `<root>/<contract_id>/{corpus,bundle,index}.json`.
#[derive(Debug, Clone)]
pub struct BundleStore {
    root: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BundleError {
    BundleError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

impl BundleStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn contract_dir(&self, contract_id: &str) -> Result<PathBuf, BundleError> {
        if !valid_id(contract_id) {
            return Err(BundleError::NotFound(format!("contract `{contract_id}`")));
        }
        Ok(self.root.join(contract_id))
    }

    fn file(&self, contract_id: &str, name: &str) -> Result<PathBuf, BundleError> {
        Ok(self.contract_dir(contract_id)?.join(name))
    }

    pub fn write_atomic(&self, path: &Path, body: &str) -> Result<(), BundleError> {
        let dir = path.parent().expect("store files have a parent");
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
        tmp.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
        tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
        tmp.persist(path).map_err(|e| io_err(path, e.error))?;
        Ok(())
    }

    fn read(&self, path: &Path, what: &str) -> Result<String, BundleError> {
        std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BundleError::NotFound(what.to_string()),
            _ => io_err(path, e),
        })
    }

    fn parse<T: serde::de::DeserializeOwned>(path: &Path, raw: &str) -> Result<T, BundleError> {
        serde_json::from_str(raw).map_err(|e| BundleError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save_corpus(&self, corpus: &ContractCorpus) -> Result<PathBuf, BundleError> {
        let path = self.file(&corpus.contract_id, CORPUS_FILE)?;
        self.write_atomic(&path, &canonical_json_pretty(corpus).expect("corpus serializes"))?;
        Ok(path)
    }

    pub fn load_corpus(&self, contract_id: &str) -> Result<ContractCorpus, BundleError> {
        let path = self.file(contract_id, CORPUS_FILE)?;
        let raw = self.read(&path, &format!("corpus for contract `{contract_id}`"))?;
        Self::parse(&path, &raw)
    }

    /// Validates, then writes the canonical bytes. Returns the content hash.
    pub fn save_bundle(&self, bundle: &AnnotationBundle) -> Result<String, BundleError> {
        bundle.validate()?;
        let path = self.file(&bundle.contract_id, BUNDLE_FILE)?;
        self.write_atomic(&path, &bundle.to_canonical_json())?;
        Ok(bundle.content_hash.clone())
    }

    pub fn load_bundle(&self, contract_id: &str) -> Result<AnnotationBundle, BundleError> {
        let path = self.file(contract_id, BUNDLE_FILE)?;
        let raw = self.read(&path, &format!("bundle for contract `{contract_id}`"))?;
        let bundle: AnnotationBundle = Self::parse(&path, &raw)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn bundle_path(&self, contract_id: &str) -> Result<PathBuf, BundleError> {
        self.file(contract_id, BUNDLE_FILE)
    }

    pub fn save_index(&self, contract_id: &str, index: &VectorIndex) -> Result<PathBuf, BundleError> {
        let path = self.file(contract_id, INDEX_FILE)?;
        self.write_atomic(&path, &index.to_json())?;
        Ok(path)
    }

    pub fn load_index(&self, contract_id: &str) -> Result<VectorIndex, BundleError> {
        let path = self.file(contract_id, INDEX_FILE)?;
        let raw = self.read(&path, &format!("index for contract `{contract_id}`"))?;
        VectorIndex::from_json(&raw).map_err(|e| BundleError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Contract ids that have a saved bundle, sorted.
    pub fn contracts(&self) -> Result<Vec<String>, BundleError> {
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root, e)),
        };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(BUNDLE_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }
}

#[cfg(test)]
pub(crate) mod tests;
