use std::sync::Arc;

use serde_json::Value;

use super::*;
use crate::annotator::annotate_policy;
use crate::corpus::{ingest_sources, ChunkConfig, ContractManifest, ManifestEntry, PolicySource};
use crate::gateway::offline::{HashingEmbedder, HeuristicProvider};
use crate::gateway::{template_versions, Gateway, GatewayMode, GatewaySettings, ReplayCache};

fn corpus() -> ContractCorpus {
    let entries = vec![
        ManifestEntry { policy_id: "terms".into(), title: "Terms".into(), format: "markdown".into(), path: "terms.md".into(), order_index: 0 },
        ManifestEntry { policy_id: "privacy".into(), title: "Privacy".into(), format: "html".into(), path: "privacy.html".into(), order_index: 1 },
    ];
    let manifest = ContractManifest { contract_id: "demo".into(), title: "Demo".into(), policies: entries };
    let sources = vec![
        PolicySource {
            contract_id: "demo".into(),
            policy_id: "terms".into(),
            title: "Terms".into(),
            format: SourceFormat::Markdown,
            raw_text: "# Content\nYou grant us a royalty-free license to your posts. We may remove content for any reason.\n\nSee the [privacy policy](privacy.html).".into(),
            order_index: 0,
        },
        PolicySource {
            contract_id: "demo".into(),
            policy_id: "privacy".into(),
            title: "Privacy".into(),
            format: SourceFormat::Html,
            raw_text: "<h1>Data</h1><p>You can delete your data at any time.</p><p>We share certain information with third parties.</p>".into(),
            order_index: 1,
        },
    ];
    ingest_sources(&manifest, &sources, &ChunkConfig::default()).unwrap()
}

fn persona() -> Persona {
    Persona::new("poster", "Social Media", vec!["You post photos.".into()], vec!["You care about your data.".into()])
}

pub(crate) fn bundle(dir: &Path) -> AnnotationBundle {
    let corpus = corpus();
    let settings = GatewaySettings { mode: GatewayMode::Record, dimension: 16, ..GatewaySettings::default() };
    let gw = Gateway::new(settings.clone(), ReplayCache::new(dir))
        .with_completion_provider(Arc::new(HeuristicProvider::new()))
        .with_embedding_provider(Arc::new(HashingEmbedder));
    let annotations = corpus
        .policies
        .iter()
        .map(|p| annotate_policy(&gw, &p.policy_id, &p.chunks, &persona()).unwrap())
        .collect();
    let provenance = Provenance {
        model_id: settings.model_id,
        embed_model_id: settings.embed_model_id,
        template_versions: template_versions(),
        persona_id: "poster".into(),
        created_at: "2026-01-01T00:00:00Z".into(),
    };
    AnnotationBundle::build(&corpus, annotations, &persona(), provenance).unwrap()
}

/// Second, independent canonicalizer: explicit key sort into a string.
fn alt_canonical(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), alt_canonical(&map[k])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(alt_canonical).collect::<Vec<_>>().join(",")),
        other => serde_json::to_string(other).unwrap(),
    }
}

#[test]
fn save_load_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(&dir.path().join("cache"));
    b.validate().unwrap();
    let store = BundleStore::new(dir.path().join("store"));
    let hash = store.save_bundle(&b).unwrap();
    let loaded = store.load_bundle("demo").unwrap();
    assert_eq!(loaded, b);
    assert_eq!(loaded.to_canonical_json(), b.to_canonical_json());
    assert_eq!(loaded.compute_hash(), hash);
    assert_eq!(store.contracts().unwrap(), vec!["demo".to_string()]);
    assert!(matches!(store.load_bundle("missing"), Err(BundleError::NotFound(_))));
    assert!(matches!(store.load_bundle("../x"), Err(BundleError::NotFound(_))));
}

#[test]
fn canonical_form_agrees_with_an_independent_serializer() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(dir.path());
    let value = serde_json::to_value(&b).unwrap();
    assert_eq!(canonical_json(&b).unwrap(), alt_canonical(&value));
    let reparsed: AnnotationBundle = serde_json::from_str(&alt_canonical(&value)).unwrap();
    assert_eq!(reparsed.compute_hash(), b.content_hash);
}

#[test]
fn bundle_is_independent_of_the_cache_location() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(bundle(a.path()).content_hash, bundle(b.path()).content_hash);
}

#[test]
fn created_at_is_not_hashed_but_content_is() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = bundle(dir.path());
    let hash = b.content_hash.clone();
    b.provenance.created_at = "2030-01-01T00:00:00Z".into();
    assert_eq!(b.compute_hash(), hash);
    b.title.push('!');
    assert_ne!(b.compute_hash(), hash);
    assert!(matches!(b.validate(), Err(BundleError::Validation(_))));
}

#[test]
fn dangling_references_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = bundle(dir.path());
    b.policies[0].annotation.chunks[0].chunk_id = "ck_missing".into();
    b.seal();
    assert!(matches!(b.validate(), Err(BundleError::Validation(m)) if m.contains("missing chunk")));
    let store = BundleStore::new(dir.path().join("store"));
    assert!(store.save_bundle(&b).is_err());
}

#[test]
fn meters_are_recomputable_and_links_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(dir.path());
    for p in &b.policies {
        assert_eq!(compute_meter(&p.annotation, Weighting::Count), p.meter);
    }
    let terms = b.policy("terms").unwrap();
    assert_eq!(terms.links[0].target_policy_id.as_deref(), Some("privacy"));
}

#[test]
fn phrase_scopes_are_keyed_and_resealed() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = bundle(dir.path());
    let chunk = b.policies[0].chunks[0].clone();
    let scope = PhraseScopeResult {
        phrase: "royalty-free".into(),
        context_chunk_id: chunk.chunk_id.clone(),
        span: Span::new(15, 27),
        persona_id: "poster".into(),
        definition: "Free of fees.".into(),
        definition_refs: vec![chunk.chunk_id.clone()],
        retrieved: vec![chunk.chunk_id.clone()],
        scenario: "A story.".into(),
        scenario_word_count: 2,
        over_length: false,
    };
    let before = b.content_hash.clone();
    b.upsert_phrase_scope(scope.clone());
    b.upsert_phrase_scope(scope.clone());
    assert_eq!(b.phrase_scopes.len(), 1);
    assert_ne!(b.content_hash, before);
    b.validate().unwrap();
    assert!(b.phrase_scope(&chunk.chunk_id, Span::new(15, 27), "poster").is_some());
    assert!(b.phrase_scope(&chunk.chunk_id, Span::new(15, 27), "buyer").is_none());
}
