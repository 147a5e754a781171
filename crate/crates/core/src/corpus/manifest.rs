use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{
    chunk_section, normalize_source, segment_sections, Chunk, ChunkConfig, CorpusError,
    NormalizedPolicy, PolicySource, Section, SourceFormat,
};

pub const MANIFEST_FILE: &str = "contract.manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub policy_id: String,
    pub title: String,
    pub format: String,
    pub path: String,
    pub order_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractManifest {
    pub contract_id: String,
    #[serde(default)]
    pub title: String,
    pub policies: Vec<ManifestEntry>,
}

impl ContractManifest {
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let path = dir.join(MANIFEST_FILE);
        let raw = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: Self = serde_json::from_str(&raw)
            .map_err(|e| CorpusError::InvalidManifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.contract_id.trim().is_empty() {
            return Err(CorpusError::InvalidManifest("contract_id is empty".into()));
        }
        if self.policies.is_empty() {
            return Err(CorpusError::InvalidManifest("no policies listed".into()));
        }
        let mut seen = HashSet::new();
        for entry in &self.policies {
            if entry.policy_id.trim().is_empty() {
                return Err(CorpusError::InvalidManifest("empty policy_id".into()));
            }
            if !seen.insert(entry.policy_id.as_str()) {
                return Err(CorpusError::InvalidManifest(format!(
                    "duplicate policy_id `{}`",
                    entry.policy_id
                )));
            }
            entry.format.parse::<SourceFormat>()?;
        }
        Ok(())
    }

    /// Resolves an href from inside a policy to the id of a listed policy.
    pub fn resolve_href(&self, href: &str) -> Option<&str> {
        let (path_part, fragment) = match href.split_once('#') {
            Some((p, f)) => (p, Some(f)),
            None => (href, None),
        };
        let path_part = path_part.split('?').next().unwrap_or("");
        let base = path_part.rsplit('/').next().unwrap_or("");
        let key = if base.is_empty() {
            fragment.unwrap_or("")
        } else {
            base
        };
        if key.is_empty() {
            return None;
        }
        self.policies.iter().find_map(|entry| {
            let file = entry.path.rsplit('/').next().unwrap_or(&entry.path);
            let stem = file.rsplit_once('.').map_or(file, |(s, _)| s);
            (key == file || key == stem || key == entry.policy_id)
                .then_some(entry.policy_id.as_str())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestedPolicy {
    pub policy_id: String,
    pub title: String,
    pub format: SourceFormat,
    pub order_index: u32,
    pub normalized: NormalizedPolicy,
    pub sections: Vec<Section>,
    pub chunks: Vec<Chunk>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractCorpus {
    pub contract_id: String,
    pub title: String,
    pub chunk_config: ChunkConfig,
    /// Sorted by `order_index`.
    pub policies: Vec<IngestedPolicy>,
    pub warnings: Vec<String>,
}

impl ContractCorpus {
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.policies.iter().flat_map(|p| p.chunks.iter())
    }

    pub fn policy(&self, policy_id: &str) -> Option<&IngestedPolicy> {
        self.policies.iter().find(|p| p.policy_id == policy_id)
    }
}

/// Reads `contract.manifest` in `dir` and ingests every listed policy.
pub fn ingest_contract(dir: &Path, config: &ChunkConfig) -> Result<ContractCorpus, CorpusError> {
    let manifest = ContractManifest::load(dir)?;
    let sources = manifest
        .policies
        .iter()
        .map(|entry| {
            let path: PathBuf = dir.join(&entry.path);
            let raw_text = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(PolicySource {
                contract_id: manifest.contract_id.clone(),
                policy_id: entry.policy_id.clone(),
                title: entry.title.clone(),
                format: entry.format.parse()?,
                raw_text,
                order_index: entry.order_index,
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;
    ingest_sources(&manifest, &sources, config)
}

pub fn ingest_sources(
    manifest: &ContractManifest,
    sources: &[PolicySource],
    config: &ChunkConfig,
) -> Result<ContractCorpus, CorpusError> {
    let results: Vec<Result<(IngestedPolicy, Vec<String>), CorpusError>> = sources
        .par_iter()
        .map(|src| {
            let mut normalized = normalize_source(src)?;
            let mut warnings = Vec::new();
            for link in &mut normalized.links {
                link.target_policy_id = manifest.resolve_href(&link.href).map(str::to_string);
                if link.target_policy_id.is_none() {
                    let msg = format!(
                        "{}: link `{}` -> `{}` does not resolve to a policy; kept as text",
                        src.policy_id, link.anchor_text, link.href
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
            let sections = segment_sections(&normalized);
            let chunks = sections
                .iter()
                .flat_map(|s| chunk_section(s, config))
                .collect();
            Ok((
                IngestedPolicy {
                    policy_id: src.policy_id.clone(),
                    title: src.title.clone(),
                    format: src.format,
                    order_index: src.order_index,
                    normalized,
                    sections,
                    chunks,
                },
                warnings,
            ))
        })
        .collect();

    let mut policies = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for result in results {
        let (policy, w) = result?;
        policies.push(policy);
        warnings.extend(w);
    }
    policies.sort_by(|a, b| {
        a.order_index
            .cmp(&b.order_index)
            .then_with(|| a.policy_id.cmp(&b.policy_id))
    });
    Ok(ContractCorpus {
        contract_id: manifest.contract_id.clone(),
        title: manifest.title.clone(),
        chunk_config: *config,
        policies,
        warnings,
    })
}
