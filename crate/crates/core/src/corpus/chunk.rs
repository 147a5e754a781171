use serde::{Deserialize, Serialize};

use super::{Chunk, CorpusError, Section, Span};
use crate::hashing::stable_id;

pub const DEFAULT_TARGET_CHARS: usize = 1500;
pub const DEFAULT_MAX_CHARS: usize = 1800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub target_chars: usize,
    pub max_chars: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            target_chars: DEFAULT_TARGET_CHARS,
            max_chars: DEFAULT_MAX_CHARS,
        }
    }
}

impl ChunkConfig {
    pub fn new(target_chars: usize, max_chars: usize) -> Result<Self, CorpusError> {
        if target_chars == 0 || target_chars > max_chars {
            return Err(CorpusError::InvalidManifest(format!(
                "chunk target {target_chars} must be in 1..={max_chars}"
            )));
        }
        Ok(Self {
            target_chars,
            max_chars,
        })
    }
}

struct Paragraph {
    start: usize,
    end: usize,
    chars: usize,
}

/// Greedily packs whole paragraphs into chunks. A chunk keeps absorbing the
/// next paragraph while it is shorter than the target and the result stays
/// within the hard cap. Splits happen only at `\n`; a lone paragraph longer
/// than the cap becomes its own chunk flagged `oversized`.
pub fn chunk_section(section: &Section, config: &ChunkConfig) -> Vec<Chunk> {
    let body = section.body_text.as_str();
    if body.is_empty() {
        return Vec::new();
    }

    let mut paragraphs = Vec::new();
    let mut start = 0;
    for (i, _) in body.match_indices('\n') {
        paragraphs.push(Paragraph {
            start,
            end: i,
            chars: body[start..i].chars().count(),
        });
        start = i + 1;
    }
    paragraphs.push(Paragraph {
        start,
        end: body.len(),
        chars: body[start..].chars().count(),
    });

    let mut groups: Vec<(usize, usize, usize)> = Vec::new(); // (start, end, chars)
    let mut current: Option<(usize, usize, usize)> = None;
    for p in &paragraphs {
        current = match current {
            None => Some((p.start, p.end, p.chars)),
            Some((s, _, chars)) if chars == 0 || p.chars == 0 => {
                Some((s, p.end, chars + 1 + p.chars))
            }
            Some((s, _, chars))
                if chars < config.target_chars && chars + 1 + p.chars <= config.max_chars =>
            {
                Some((s, p.end, chars + 1 + p.chars))
            }
            Some(done) => {
                groups.push(done);
                Some((p.start, p.end, p.chars))
            }
        };
    }
    groups.extend(current);

    let section_offset = section.char_range.start;
    groups
        .into_iter()
        .map(|(s, e, chars)| {
            let text = &body[s..e];
            let global_start = (section_offset + s).to_string();
            Chunk {
                chunk_id: stable_id("ck", &[&section.policy_id, &global_start, text]),
                policy_id: section.policy_id.clone(),
                section_ref: section.section_id.clone(),
                text: text.to_string(),
                char_range: Span::new(s, e),
                paragraph_breaks: text.match_indices('\n').map(|(i, _)| i).collect(),
                oversized: chars > config.max_chars,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section(body: &str) -> Section {
        Section {
            section_id: "p#s0".into(),
            policy_id: "p".into(),
            heading_path: vec![],
            body_text: body.into(),
            char_range: Span::new(0, body.len()),
        }
    }

    /// Hand-checked reference: paragraphs of 800, 800, 800 with target 1500
    /// and cap 1800 pack as [800 + 800], [800].
    #[test]
    fn greedy_packing_matches_hand_computation() {
        let p = "a".repeat(800);
        let body = format!("{p}\n{p}\n{p}");
        let chunks = chunk_section(&section(&body), &ChunkConfig::default());
        let lens: Vec<_> = chunks.iter().map(|c| c.text.len()).collect();
        assert_eq!(lens, vec![1601, 800]);
        assert_eq!(chunks[0].paragraph_breaks, vec![800]);
        assert_eq!(chunks[1].char_range, Span::new(1602, 2402));
        assert!(chunks.iter().all(|c| !c.oversized));
    }

    #[test]
    fn empty_section_has_no_chunks() {
        assert!(chunk_section(&section(""), &ChunkConfig::default()).is_empty());
    }

    #[test]
    fn long_paragraph_is_one_oversized_chunk() {
        let body = "x".repeat(2000);
        let chunks = chunk_section(&section(&body), &ChunkConfig::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text.len(), 2000);
        assert!(chunks[0].oversized);
    }

    #[test]
    fn oversized_paragraph_does_not_absorb_neighbours() {
        let big = "x".repeat(2000);
        let body = format!("small\n{big}\nafter");
        let chunks = chunk_section(&section(&body), &ChunkConfig::default());
        let texts: Vec<_> = chunks.iter().map(|c| c.text.len()).collect();
        assert_eq!(texts, vec![5, 2000, 5]);
        assert_eq!(
            chunks.iter().map(|c| c.oversized).collect::<Vec<_>>(),
            vec![false, true, false]
        );
    }

    #[test]
    fn chunk_ids_are_deterministic_and_position_sensitive() {
        let a = chunk_section(&section("same"), &ChunkConfig::default());
        let b = chunk_section(&section("same"), &ChunkConfig::default());
        assert_eq!(a[0].chunk_id, b[0].chunk_id);
        let mut shifted = section("same");
        shifted.char_range = Span::new(10, 14);
        let c = chunk_section(&shifted, &ChunkConfig::default());
        assert_ne!(a[0].chunk_id, c[0].chunk_id);
    }

    #[test]
    fn sizes_count_characters_not_bytes() {
        let p = "é".repeat(800);
        let body = format!("{p}\n{p}");
        let chunks = chunk_section(&section(&body), &ChunkConfig::default());
        assert_eq!(chunks.len(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(ChunkConfig::new(2000, 1800).is_err());
        assert!(ChunkConfig::new(0, 10).is_err());
        assert!(ChunkConfig::new(1500, 1800).is_ok());
    }
}
