//! Policy ingestion: normalization of HTML/markdown sources, header-based
//! section segmentation, and paragraph-preserving chunking.
//!
//! Offsets throughout are UTF-8 byte offsets that always fall on character
//! boundaries. Chunk sizes are measured in characters.

mod chunk;
mod html;
mod manifest;
mod markdown;
mod segment;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_section, ChunkConfig, DEFAULT_MAX_CHARS, DEFAULT_TARGET_CHARS};
pub use manifest::{
    ingest_contract, ingest_sources, ContractCorpus, ContractManifest, IngestedPolicy, ManifestEntry,
    MANIFEST_FILE,
};
pub use segment::{reconstruct_policy_text, segment_sections};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed source for policy `{policy_id}`: {reason}")]
    MalformedSource { policy_id: String, reason: String },
    #[error("unknown source format `{0}`")]
    UnknownFormat(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Html,
    Markdown,
}

impl FromStr for SourceFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "html" | "htm" => Ok(Self::Html),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySource {
    pub contract_id: String,
    pub policy_id: String,
    pub title: String,
    pub format: SourceFormat,
    pub raw_text: String,
    pub order_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Heading {
    pub level: u8,
    pub text: String,
}

/// A heading retained by normalization. `offset` is where the body text that
/// follows the heading begins in the normalized text (equal to the text
/// length when nothing follows).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadingMark {
    pub level: u8,
    pub text: String,
    pub offset: usize,
}

/// Inline hyperlink kept from the source markup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkAnnotation {
    pub anchor_text: String,
    pub href: String,
    pub target_policy_id: Option<String>,
    pub range: Span,
}

/// Plain policy text: paragraphs joined by `\n`, headings kept as marks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedPolicy {
    pub policy_id: String,
    pub text: String,
    pub headings: Vec<HeadingMark>,
    pub links: Vec<LinkAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    pub policy_id: String,
    pub heading_path: Vec<Heading>,
    pub body_text: String,
    pub char_range: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub policy_id: String,
    pub section_ref: String,
    pub text: String,
    /// Range within the owning section's body.
    pub char_range: Span,
    /// Offsets of `\n` separators inside `text`.
    pub paragraph_breaks: Vec<usize>,
    pub oversized: bool,
}

/// Maps source markup to a [`NormalizedPolicy`]. Links are returned
/// unresolved; [`ingest_contract`] resolves them against the manifest.
pub fn normalize_source(src: &PolicySource) -> Result<NormalizedPolicy, CorpusError> {
    if src.raw_text.trim().is_empty() {
        return Err(CorpusError::MalformedSource {
            policy_id: src.policy_id.clone(),
            reason: "source text is empty".into(),
        });
    }
    let built = match src.format {
        SourceFormat::Html => html::normalize(&src.raw_text),
        SourceFormat::Markdown => Ok(markdown::normalize(&src.raw_text)),
    }
    .map_err(|reason| CorpusError::MalformedSource {
        policy_id: src.policy_id.clone(),
        reason,
    })?;
    Ok(built.finish(&src.policy_id))
}

#[derive(Debug)]
struct OpenLink {
    href: String,
    start: usize,
}

/// Accumulates paragraphs, headings and links while a source is walked.
#[derive(Debug, Default)]
pub(crate) struct TextBuilder {
    text: String,
    para: String,
    pending_headings: Vec<(u8, String)>,
    heading_marks: Vec<HeadingMark>,
    heading: Option<(u8, String)>,
    links: Vec<(String, String, usize, usize)>,
    open_link: Option<OpenLink>,
    para_links: Vec<(String, usize, usize)>,
    preformatted: bool,
}

impl TextBuilder {
    pub(crate) fn push_text(&mut self, s: &str) {
        if self.preformatted && self.heading.is_none() {
            for (i, line) in s.split('\n').enumerate() {
                if i > 0 {
                    self.break_paragraph();
                }
                self.para.push_str(line.trim_end_matches('\r'));
            }
            return;
        }
        let target = match self.heading.as_mut() {
            Some((_, h)) => h,
            None => &mut self.para,
        };
        for ch in s.chars() {
            if ch.is_whitespace() {
                if !target.is_empty() && !target.ends_with(' ') {
                    target.push(' ');
                }
            } else {
                target.push(ch);
            }
        }
    }

    pub(crate) fn set_preformatted(&mut self, on: bool) {
        self.preformatted = on;
    }

    pub(crate) fn open_heading(&mut self, level: u8) {
        self.break_paragraph();
        self.heading = Some((level, String::new()));
    }

    pub(crate) fn in_heading(&self) -> bool {
        self.heading.is_some()
    }

    pub(crate) fn close_heading(&mut self) {
        if let Some((level, text)) = self.heading.take() {
            let text = text.trim().to_string();
            if !text.is_empty() {
                self.pending_headings.push((level, text));
            }
        }
    }

    pub(crate) fn open_link(&mut self, href: &str) {
        if self.heading.is_some() {
            return;
        }
        self.open_link = Some(OpenLink {
            href: href.to_string(),
            start: self.para.len(),
        });
    }

    pub(crate) fn close_link(&mut self) {
        if let Some(link) = self.open_link.take() {
            if link.start <= self.para.len() {
                self.para_links.push((link.href, link.start, self.para.len()));
            }
        }
    }

    /// Ends the current paragraph (block boundary).
    pub(crate) fn break_paragraph(&mut self) {
        if self.heading.is_some() {
            // block boundaries inside a heading do not split it
            if let Some((_, h)) = self.heading.as_mut() {
                if !h.is_empty() && !h.ends_with(' ') {
                    h.push(' ');
                }
            }
            return;
        }
        self.close_link();
        let trimmed_len = if self.preformatted {
            self.para.len()
        } else {
            self.para.trim_end().len()
        };
        let para = std::mem::take(&mut self.para);
        let para_links = std::mem::take(&mut self.para_links);
        if para[..trimmed_len].trim().is_empty() {
            return;
        }
        let para = &para[..trimmed_len];
        let start = if self.text.is_empty() {
            0
        } else {
            self.text.len() + 1
        };
        for (level, text) in self.pending_headings.drain(..) {
            self.heading_marks.push(HeadingMark {
                level,
                text,
                offset: start,
            });
        }
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        self.text.push_str(para);
        for (href, s, e) in para_links {
            let s = s.min(trimmed_len);
            let e = e.min(trimmed_len);
            let raw = &para[s..e];
            let lead = raw.len() - raw.trim_start().len();
            let anchor = raw.trim();
            if anchor.is_empty() {
                continue;
            }
            let abs = start + s + lead;
            self.links
                .push((anchor.to_string(), href, abs, abs + anchor.len()));
        }
    }

    pub(crate) fn finish(mut self, policy_id: &str) -> NormalizedPolicy {
        self.close_heading();
        self.break_paragraph();
        let end = self.text.len();
        for (level, text) in self.pending_headings.drain(..) {
            self.heading_marks.push(HeadingMark {
                level,
                text,
                offset: end,
            });
        }
        NormalizedPolicy {
            policy_id: policy_id.to_string(),
            text: self.text,
            headings: self.heading_marks,
            links: self
                .links
                .into_iter()
                .map(|(anchor_text, href, s, e)| LinkAnnotation {
                    anchor_text,
                    href,
                    target_policy_id: None,
                    range: Span::new(s, e),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(format: SourceFormat, raw: &str) -> PolicySource {
        PolicySource {
            contract_id: "c".into(),
            policy_id: "p".into(),
            title: "P".into(),
            format,
            raw_text: raw.into(),
            order_index: 0,
        }
    }

    #[test]
    fn markdown_heading_and_body() {
        let np = normalize_source(&src(SourceFormat::Markdown, "# A\npara")).unwrap();
        assert_eq!(np.text, "para");
        assert_eq!(
            np.headings,
            vec![HeadingMark {
                level: 1,
                text: "A".into(),
                offset: 0
            }]
        );
    }

    #[test]
    fn html_blocks_become_paragraphs() {
        let np =
            normalize_source(&src(SourceFormat::Html, "<h2>B</h2><p>x</p><p>y</p>")).unwrap();
        assert_eq!(np.text, "x\ny");
        assert_eq!(np.headings.len(), 1);
        assert_eq!(np.headings[0].level, 2);
        assert_eq!(np.headings[0].text, "B");
    }

    #[test]
    fn empty_source_is_malformed() {
        for format in [SourceFormat::Html, SourceFormat::Markdown] {
            let err = normalize_source(&src(format, "")).unwrap_err();
            assert!(matches!(err, CorpusError::MalformedSource { .. }));
        }
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!(matches!(
            "pdf".parse::<SourceFormat>(),
            Err(CorpusError::UnknownFormat(_))
        ));
        assert_eq!("MD".parse::<SourceFormat>().unwrap(), SourceFormat::Markdown);
    }

    #[test]
    fn links_are_recorded_with_offsets() {
        let np = normalize_source(&src(
            SourceFormat::Html,
            "<p>Read our <a href=\"privacy.html\">Privacy Policy</a> now.</p>",
        ))
        .unwrap();
        assert_eq!(np.links.len(), 1);
        let link = &np.links[0];
        assert_eq!(link.range.slice(&np.text), "Privacy Policy");
        assert_eq!(link.href, "privacy.html");
    }
}
