use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ScopeError, ScoredChunk};
use crate::corpus::Chunk;
use crate::gateway::{EmbeddingVector, Gateway};

pub const INDEX_FORMAT: &str = "tosread-vector-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
}

/// Immutable, sorted by chunk id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn from_entries(mut entries: Vec<IndexEntry>) -> Result<Self, ScopeError> {
        entries.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].chunk_id == w[1].chunk_id) {
            return Err(ScopeError::DuplicateChunk(w[0].chunk_id.clone()));
        }
        let dimension = entries.first().map_or(0, |e| e.vector.dimension());
        if let Some(e) = entries.iter().find(|e| e.vector.dimension() != dimension) {
            return Err(ScopeError::DimensionMismatch {
                expected: dimension,
                found: e.vector.dimension(),
            });
        }
        Ok(Self {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            dimension,
            count: entries.len(),
            entries,
        })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        crate::hashing::canonical_json_pretty(self).expect("index serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, ScopeError> {
        let parsed: VectorIndex =
            serde_json::from_str(raw).map_err(|e| ScopeError::InvalidIndex(e.to_string()))?;
        if parsed.format != INDEX_FORMAT || parsed.version != INDEX_VERSION {
            return Err(ScopeError::InvalidIndex(format!(
                "unsupported index {} v{}",
                parsed.format, parsed.version
            )));
        }
        if parsed.count != parsed.entries.len() {
            return Err(ScopeError::InvalidIndex("entry count mismatch".into()));
        }
        let dimension = parsed.dimension;
        let index = Self::from_entries(parsed.entries)?;
        if !index.is_empty() && index.dimension != dimension {
            return Err(ScopeError::InvalidIndex("dimension mismatch".into()));
        }
        Ok(index)
    }
}

/// Embeds every chunk. Fails if any chunk cannot be embedded.
pub fn build_index(gw: &Gateway, chunks: &[Chunk]) -> Result<VectorIndex, ScopeError> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = chunks.iter().find(|c| !seen.insert(c.chunk_id.as_str())) {
        return Err(ScopeError::DuplicateChunk(dup.chunk_id.clone()));
    }
    let entries = chunks
        .par_iter()
        .map(|c| {
            Ok(IndexEntry {
                chunk_id: c.chunk_id.clone(),
                vector: gw.embed(&c.text)?,
            })
        })
        .collect::<Result<Vec<_>, ScopeError>>()?;
    VectorIndex::from_entries(entries)
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, ScopeError> {
    if u.len() != v.len() {
        return Err(ScopeError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Top `k` entries by descending cosine, ties by ascending chunk id.
pub fn rank(index: &VectorIndex, query: &[f64], k: usize) -> Result<Vec<ScoredChunk>, ScopeError> {
    if index.is_empty() {
        return Err(ScopeError::EmptyIndex);
    }
    let mut scored = index
        .entries
        .iter()
        .map(|e| {
            Ok(ScoredChunk {
                chunk_id: e.chunk_id.clone(),
                score: cosine(query, &e.vector.values)?,
            })
        })
        .collect::<Result<Vec<_>, ScopeError>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
    scored.truncate(k);
    Ok(scored)
}
