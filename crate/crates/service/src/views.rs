//! Response bodies. Every read view is a pure projection of a bundle.

use serde::Serialize;

use tosread_core::annotator::{
    ChunkError, PhraseAnnotation, PolicyAnnotation, Power, PowerLabel, Relevance, RelevanceLabel,
};
use tosread_core::bundle::{AnnotationBundle, BundlePolicy, SectionRef};
use tosread_core::corpus::{LinkAnnotation, SourceFormat, Span};
use tosread_core::meter::{meter_preview, ColorToken, Palette, PowerMeter, PreviewEntry};

#[derive(Debug, Serialize)]
pub struct ContractSummary {
    pub contract_id: String,
    pub title: String,
    pub policy_count: usize,
    pub persona_id: String,
    pub content_hash: String,
}

impl ContractSummary {
    pub fn of(bundle: &AnnotationBundle) -> Self {
        Self {
            contract_id: bundle.contract_id.clone(),
            title: bundle.title.clone(),
            policy_count: bundle.policies.len(),
            persona_id: bundle.persona.persona_id.clone(),
            content_hash: bundle.content_hash.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PolicyListing {
    pub contract_id: String,
    pub policies: Vec<PolicyEntry>,
}

#[derive(Debug, Serialize)]
pub struct PolicyEntry {
    pub policy_id: String,
    pub title: String,
    pub order_index: u32,
    pub snippet_count: usize,
    pub meter: PowerMeter,
    pub preview: Vec<PreviewEntry>,
    pub links: Vec<LinkAnnotation>,
}

impl PolicyListing {
    pub fn of(bundle: &AnnotationBundle, preview_limit: usize) -> Self {
        let mut policies: Vec<&BundlePolicy> = bundle.policies.iter().collect();
        policies.sort_by_key(|p| p.order_index);
        Self {
            contract_id: bundle.contract_id.clone(),
            policies: policies
                .into_iter()
                .map(|p| PolicyEntry {
                    policy_id: p.policy_id.clone(),
                    title: p.title.clone(),
                    order_index: p.order_index,
                    snippet_count: p.annotation.snippets().count(),
                    meter: p.meter.clone(),
                    preview: meter_preview(&p.annotation, preview_limit),
                    links: p.links.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PolicyView {
    pub contract_id: String,
    pub policy_id: String,
    pub title: String,
    pub format: SourceFormat,
    pub order_index: u32,
    pub persona_id: String,
    pub sections: Vec<SectionRef>,
    pub links: Vec<LinkAnnotation>,
    pub meter: PowerMeter,
    pub palette: Vec<ColorToken>,
    pub chunks: Vec<ChunkView>,
}

#[derive(Debug, Serialize)]
pub struct ChunkView {
    pub chunk_id: String,
    pub section_ref: String,
    pub text: String,
    pub char_range: Span,
    pub paragraph_breaks: Vec<usize>,
    pub oversized: bool,
    pub needs_reannotation: bool,
    pub snippets: Vec<SnippetOut>,
    pub phrases: Vec<PhraseAnnotation>,
    pub errors: Vec<ChunkError>,
}

#[derive(Debug, Serialize)]
pub struct SnippetOut {
    pub snippet_id: String,
    pub span: Span,
    pub text: String,
    pub summary_text: String,
    pub word_count: usize,
    pub truncated: bool,
    pub unsummarized: bool,
    pub oversized_gap: bool,
    pub power: Option<PowerLabel>,
    pub relevance: Option<RelevanceLabel>,
    pub color: ColorToken,
}

impl PolicyView {
    pub fn of(bundle: &AnnotationBundle, policy: &BundlePolicy, palette: &Palette) -> Self {
        Self {
            contract_id: bundle.contract_id.clone(),
            policy_id: policy.policy_id.clone(),
            title: policy.title.clone(),
            format: policy.format,
            order_index: policy.order_index,
            persona_id: policy.annotation.persona_id.clone(),
            sections: policy.sections.clone(),
            links: policy.links.clone(),
            meter: policy.meter.clone(),
            palette: palette.tokens(),
            chunks: chunk_views(policy, palette),
        }
    }
}

fn chunk_views(policy: &BundlePolicy, palette: &Palette) -> Vec<ChunkView> {
    let ann: &PolicyAnnotation = &policy.annotation;
    policy
        .chunks
        .iter()
        .map(|chunk| {
            let ca = ann.chunks.iter().find(|c| c.chunk_id == chunk.chunk_id);
            let snippets = ca
                .map(|ca| {
                    ca.snippets
                        .iter()
                        .zip(&ca.summaries)
                        .map(|(s, sum)| {
                            let labels = ca.labels.iter().find(|l| l.snippet_id == s.snippet_id);
                            let color = match labels {
                                Some(l) if !s.unsummarized => {
                                    palette.color_for(l.power.category, l.relevance.level)
                                }
                                _ => palette.color_for(Power::Neutral, Relevance::Low),
                            };
                            SnippetOut {
                                snippet_id: s.snippet_id.clone(),
                                span: s.span,
                                text: s.text.clone(),
                                summary_text: sum.summary_text.clone(),
                                word_count: sum.word_count,
                                truncated: sum.truncated,
                                unsummarized: s.unsummarized,
                                oversized_gap: s.oversized_gap,
                                power: labels.map(|l| l.power.clone()),
                                relevance: labels.map(|l| l.relevance.clone()),
                                color,
                            }
                        })
                        .collect()
                })
                .unwrap_or_default();
            ChunkView {
                chunk_id: chunk.chunk_id.clone(),
                section_ref: chunk.section_ref.clone(),
                text: chunk.text.clone(),
                char_range: chunk.char_range,
                paragraph_breaks: chunk.paragraph_breaks.clone(),
                oversized: chunk.oversized,
                needs_reannotation: ca.is_some_and(|c| c.needs_reannotation),
                snippets,
                phrases: ca.map(|c| c.phrases.clone()).unwrap_or_default(),
                errors: ca.map(|c| c.errors.clone()).unwrap_or_default(),
            }
        })
        .collect()
}
