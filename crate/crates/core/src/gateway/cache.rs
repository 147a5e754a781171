//! One JSON file per exchange, named by its request hash.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{DecodingParams, GatewayError, TemplateId};
use crate::hashing::canonical_json_pretty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExchange {
    pub request_hash: String,
    pub template_id: TemplateId,
    pub template_version: String,
    pub attempt: u32,
    pub bindings: std::collections::BTreeMap<String, String>,
    pub params: DecodingParams,
    pub provider_model_id: String,
    pub rendered_prompt: String,
    pub raw_completion: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExchange {
    pub request_hash: String,
    pub provider_model_id: String,
    pub dimension: usize,
    pub text: String,
    pub source_text_hash: String,
    pub values: Vec<f64>,
    pub timestamp: String,
}

#[derive(Debug, Clone)]
pub struct ReplayCache {
    root: PathBuf,
}

const COMPLETIONS: &str = "completions";
const EMBEDDINGS: &str = "embeddings";

impl ReplayCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn completion_path(&self, hash: &str) -> PathBuf {
        self.root.join(COMPLETIONS).join(format!("{hash}.json"))
    }

    pub fn embedding_path(&self, hash: &str) -> PathBuf {
        self.root.join(EMBEDDINGS).join(format!("{hash}.json"))
    }

    pub fn load_completion(&self, hash: &str) -> Result<Option<PromptExchange>, GatewayError> {
        read_json(&self.completion_path(hash))
    }

    pub fn load_embedding(&self, hash: &str) -> Result<Option<EmbeddingExchange>, GatewayError> {
        read_json(&self.embedding_path(hash))
    }

    pub fn store_completion(&self, ex: &PromptExchange) -> Result<(), GatewayError> {
        write_atomic(&self.completion_path(&ex.request_hash), ex)
    }

    pub fn store_embedding(&self, ex: &EmbeddingExchange) -> Result<(), GatewayError> {
        write_atomic(&self.embedding_path(&ex.request_hash), ex)
    }

    /// All cached completion exchanges, sorted by hash.
    pub fn completions(&self) -> Result<Vec<PromptExchange>, GatewayError> {
        list_dir(&self.root.join(COMPLETIONS))
    }

    pub fn embeddings(&self) -> Result<Vec<EmbeddingExchange>, GatewayError> {
        list_dir(&self.root.join(EMBEDDINGS))
    }
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Cache(format!("{}: {e}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, GatewayError> {
    match std::fs::read_to_string(path) {
        Ok(raw) => serde_json::from_str(&raw)
            .map(Some)
            .map_err(|e| cache_err(path, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(cache_err(path, e)),
    }
}

fn write_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), GatewayError> {
    let dir = path.parent().expect("cache paths have a parent");
    std::fs::create_dir_all(dir).map_err(|e| cache_err(dir, e))?;
    let body = canonical_json_pretty(value).map_err(|e| cache_err(path, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| cache_err(dir, e))?;
    tmp.write_all(body.as_bytes())
        .map_err(|e| cache_err(path, e))?;
    tmp.persist(path).map_err(|e| cache_err(path, e.error))?;
    Ok(())
}

fn list_dir<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>, GatewayError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(cache_err(dir, e)),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| read_json(p).map(|v| v.expect("listed file exists")))
        .collect()
}
