//! Fixture-driven evaluation of a bundle against gold judgments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotator::{Power, Relevance, SnippetView};
use crate::bundle::{AnnotationBundle, BundleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Power,
    Relevance,
    Definition,
    Scenario,
}

impl EvalKind {
    pub const ALL: [EvalKind; 4] = [EvalKind::Power, EvalKind::Relevance, EvalKind::Definition, EvalKind::Scenario];
}

/// A labeled snippet is referenced by id or by its exact (trimmed) text; a
/// phrase scope by chunk id and phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub kind: EvalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase: Option<String>,
    /// Gold label for power/relevance items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    /// Rubric judgments for definition/scenario items; any false flag is a
    /// mismatch.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rubric: BTreeMap<String, bool>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalFixture {
    #[serde(default)]
    pub source_note: String,
    pub items: Vec<EvalItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KindTotals {
    pub items: usize,
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub kind: EvalKind,
    pub reference: String,
    pub input: String,
    pub output: String,
    pub expected: String,
    pub model_explanation: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub contract_id: String,
    pub total_items: usize,
    pub total_mismatches: usize,
    pub by_kind: BTreeMap<EvalKind, KindTotals>,
    pub mismatches: Vec<Mismatch>,
}

fn invalid(i: usize, why: impl std::fmt::Display) -> BundleError {
    BundleError::Validation(format!("eval item {i}: {why}"))
}

fn find_snippet<'a>(bundle: &'a AnnotationBundle, i: usize, item: &EvalItem) -> Result<SnippetView<'a>, BundleError> {
    let views = || bundle.policies.iter().flat_map(|p| p.annotation.snippets());
    let found = match (&item.snippet_id, &item.snippet_text) {
        (Some(id), _) => views().find(|v| &v.snippet.snippet_id == id),
        (None, Some(text)) => views().find(|v| v.snippet.text.trim() == text.trim()),
        (None, None) => return Err(invalid(i, "needs snippet_id or snippet_text")),
    };
    let view = found.ok_or_else(|| invalid(i, "snippet not found in bundle"))?;
    if view.labels.is_none() || view.snippet.unsummarized {
        return Err(invalid(i, format!("snippet `{}` is not labeled", view.snippet.snippet_id)));
    }
    Ok(view)
}

pub fn run_eval(bundle: &AnnotationBundle, fixture: &EvalFixture) -> Result<EvalReport, BundleError> {
    let mut by_kind: BTreeMap<EvalKind, KindTotals> = EvalKind::ALL.iter().map(|&k| (k, KindTotals::default())).collect();
    let mut mismatches = Vec::new();
    for (i, item) in fixture.items.iter().enumerate() {
        let miss = match item.kind {
            EvalKind::Power | EvalKind::Relevance => {
                let view = find_snippet(bundle, i, item)?;
                let labels = view.labels.expect("checked above");
                let gold = item.gold.as_deref().ok_or_else(|| invalid(i, "missing gold label"))?;
                let (output, expected, explanation) = if item.kind == EvalKind::Power {
                    let gold: Power = gold.parse().map_err(|e| invalid(i, e))?;
                    (labels.power.category.to_string(), gold.to_string(), &labels.power.explanation)
                } else {
                    let gold: Relevance = gold.parse().map_err(|e| invalid(i, e))?;
                    (labels.relevance.level.to_string(), gold.to_string(), &labels.relevance.explanation)
                };
                (output != expected).then(|| Mismatch {
                    kind: item.kind,
                    reference: view.snippet.snippet_id.clone(),
                    input: view.snippet.text.trim().to_string(),
                    output,
                    expected,
                    model_explanation: explanation.clone(),
                    note: item.note.clone(),
                })
            }
            EvalKind::Definition | EvalKind::Scenario => {
                let (Some(chunk_id), Some(phrase)) = (&item.chunk_id, &item.phrase) else {
                    return Err(invalid(i, "needs chunk_id and phrase"));
                };
                let scope = bundle
                    .phrase_scopes
                    .iter()
                    .find(|s| &s.context_chunk_id == chunk_id && &s.phrase == phrase)
                    .ok_or_else(|| invalid(i, format!("no phrase scope for `{phrase}` in `{chunk_id}`")))?;
                if item.rubric.is_empty() {
                    return Err(invalid(i, "missing rubric flags"));
                }
                let failed: Vec<&str> = item.rubric.iter().filter(|(_, ok)| !**ok).map(|(k, _)| k.as_str()).collect();
                let output = if item.kind == EvalKind::Definition { &scope.definition } else { &scope.scenario };
                (!failed.is_empty()).then(|| Mismatch {
                    kind: item.kind,
                    reference: format!("{chunk_id}:{phrase}"),
                    input: phrase.clone(),
                    output: output.clone(),
                    expected: format!("rubric flags failed: {}", failed.join(", ")),
                    model_explanation: String::new(),
                    note: item.note.clone(),
                })
            }
        };
        let totals = by_kind.get_mut(&item.kind).expect("all kinds present");
        totals.items += 1;
        if let Some(m) = miss {
            totals.mismatches += 1;
            mismatches.push(m);
        }
    }
    Ok(EvalReport {
        contract_id: bundle.contract_id.clone(),
        total_items: fixture.items.len(),
        total_mismatches: mismatches.len(),
        by_kind,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::tests::bundle;
    use crate::corpus::Span;
    use crate::scope::PhraseScopeResult;

    fn labeled(bundle: &AnnotationBundle) -> Vec<(String, Power, Relevance)> {
        bundle
            .policies
            .iter()
            .flat_map(|p| p.annotation.snippets())
            .filter(|v| !v.snippet.unsummarized)
            .filter_map(|v| v.labels.map(|l| (v.snippet.snippet_id.clone(), l.power.category, l.relevance.level)))
            .collect()
    }

    fn other_power(p: Power) -> Power {
        if p == Power::Service { Power::User } else { Power::Service }
    }

    fn item(kind: EvalKind, snippet_id: &str, gold: &str) -> EvalItem {
        EvalItem {
            kind,
            snippet_id: Some(snippet_id.into()),
            snippet_text: None,
            chunk_id: None,
            phrase: None,
            gold: Some(gold.into()),
            rubric: BTreeMap::new(),
            note: "n".into(),
        }
    }

    #[test]
    fn agreeing_gold_gives_no_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(dir.path());
        let items = labeled(&b)
            .iter()
            .flat_map(|(id, p, r)| [item(EvalKind::Power, id, p.as_str()), item(EvalKind::Relevance, id, r.as_str())])
            .collect();
        let report = run_eval(&b, &EvalFixture { source_note: String::new(), items }).unwrap();
        assert!(report.total_items > 0);
        assert_eq!(report.total_mismatches, 0);
        assert_eq!(report.by_kind[&EvalKind::Power].items * 2, report.total_items);
    }

    #[test]
    fn disagreements_are_counted_per_kind() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(dir.path());
        let (id, p, r) = labeled(&b).remove(0);
        let flipped = if r == Relevance::High { "Low" } else { "High" };
        let items = vec![
            item(EvalKind::Power, &id, other_power(p).as_str()),
            item(EvalKind::Power, &id, p.as_str()),
            item(EvalKind::Relevance, &id, flipped),
        ];
        let report = run_eval(&b, &EvalFixture { source_note: String::new(), items }).unwrap();
        assert_eq!(report.total_mismatches, 2);
        assert_eq!(report.by_kind[&EvalKind::Power], KindTotals { items: 2, mismatches: 1 });
        assert_eq!(report.by_kind[&EvalKind::Relevance], KindTotals { items: 1, mismatches: 1 });
        assert_eq!(report.mismatches[0].output, p.as_str());
        assert_eq!(report.mismatches[0].expected, other_power(p).as_str());
        assert_eq!(report.mismatches[1].expected, flipped);
    }

    #[test]
    fn snippets_resolve_by_trimmed_text() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(dir.path());
        let (id, p, _) = labeled(&b).remove(0);
        let text = b.policies.iter().flat_map(|x| x.annotation.snippets()).find(|v| v.snippet.snippet_id == id).unwrap().snippet.text.clone();
        let mut it = item(EvalKind::Power, "", p.as_str());
        it.snippet_id = None;
        it.snippet_text = Some(format!("  {}  ", text.trim()));
        let report = run_eval(&b, &EvalFixture { source_note: String::new(), items: vec![it] }).unwrap();
        assert_eq!(report.total_mismatches, 0);
    }

    #[test]
    fn rubric_failures_and_bad_items() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = bundle(dir.path());
        let chunk_id = b.policies[0].chunks[0].chunk_id.clone();
        b.phrase_scopes.push(PhraseScopeResult {
            phrase: "license".into(),
            context_chunk_id: chunk_id.clone(),
            span: Span::new(0, 7),
            persona_id: "poster".into(),
            definition: "d".into(),
            definition_refs: vec![],
            retrieved: vec![],
            scenario: "s".into(),
            scenario_word_count: 1,
            over_length: false,
        });
        let scope_item = |kind, flags: &[(&str, bool)]| EvalItem {
            kind,
            snippet_id: None,
            snippet_text: None,
            chunk_id: Some(chunk_id.clone()),
            phrase: Some("license".into()),
            gold: None,
            rubric: flags.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            note: String::new(),
        };
        let items = vec![
            scope_item(EvalKind::Definition, &[("grounded", true), ("plain", false)]),
            scope_item(EvalKind::Scenario, &[("concrete", true)]),
        ];
        let report = run_eval(&b, &EvalFixture { source_note: String::new(), items }).unwrap();
        assert_eq!(report.total_mismatches, 1);
        assert_eq!(report.mismatches[0].expected, "rubric flags failed: plain");

        let missing = vec![scope_item(EvalKind::Scenario, &[])];
        assert!(run_eval(&b, &EvalFixture { source_note: String::new(), items: missing }).is_err());
        let unknown = vec![item(EvalKind::Power, "nope", "User")];
        assert!(run_eval(&b, &EvalFixture { source_note: String::new(), items: unknown }).is_err());
        let (id, _, _) = labeled(&b).remove(0);
        let bad_gold = vec![item(EvalKind::Power, &id, "Maybe")];
        assert!(run_eval(&b, &EvalFixture { source_note: String::new(), items: bad_gold }).is_err());
    }

    #[test]
    fn empty_fixture_reports_zero_for_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_eval(&bundle(dir.path()), &EvalFixture::default()).unwrap();
        assert_eq!(report.total_items, 0);
        assert!(report.by_kind.values().all(|t| *t == KindTotals::default()));
        assert_eq!(report.by_kind.len(), 4);
    }
}
