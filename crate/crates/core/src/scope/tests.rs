use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::gateway::offline::{HashingEmbedder, HeuristicProvider, Override};
use crate::gateway::{EmbeddingVector, GatewaySettings, ReplayCache};

fn entry(id: &str, v: &[f64]) -> IndexEntry {
    IndexEntry {
        chunk_id: id.into(),
        vector: EmbeddingVector::new(v.to_vec(), id).unwrap(),
    }
}

fn gateway(dir: &std::path::Path, overrides: Vec<Override>) -> Gateway {
    let settings = GatewaySettings {
        mode: GatewayMode::Record,
        dimension: 64,
        ..GatewaySettings::default()
    };
    Gateway::new(settings, ReplayCache::new(dir))
        .with_completion_provider(Arc::new(HeuristicProvider::with_overrides(overrides)))
        .with_embedding_provider(Arc::new(HashingEmbedder))
}

fn chunk(id: &str, text: &str) -> crate::corpus::Chunk {
    crate::corpus::Chunk {
        chunk_id: id.into(),
        policy_id: "p".into(),
        section_ref: "p#s1".into(),
        text: text.into(),
        char_range: Span::new(0, text.len()),
        paragraph_breaks: vec![],
        oversized: false,
    }
}

#[test]
fn cosine_examples() {
    assert!((cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    assert!((cosine(&[1.0, 0.0], &[0.6, 0.8]).unwrap() - 0.6).abs() < 1e-12);
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(ScopeError::DimensionMismatch { .. })));
}

#[test]
fn planted_vectors_rank_analytically() {
    let index = VectorIndex::from_entries(vec![
        entry("c1", &[1.0, 0.0]),
        entry("c2", &[0.0, 1.0]),
        entry("c3", &[0.6, 0.8]),
    ])
    .unwrap();
    let ranked = rank(&index, &[1.0, 0.0], 15).unwrap();
    let ids: Vec<&str> = ranked.iter().map(|r| r.chunk_id.as_str()).collect();
    assert_eq!(ids, vec!["c1", "c3", "c2"]);
    let scores: Vec<f64> = ranked.iter().map(|r| r.score).collect();
    assert!((scores[0] - 1.0).abs() < 1e-12 && (scores[1] - 0.6).abs() < 1e-12 && scores[2] == 0.0);
}

#[test]
fn index_rejects_duplicates_and_round_trips() {
    assert!(matches!(
        VectorIndex::from_entries(vec![entry("a", &[1.0]), entry("a", &[2.0])]),
        Err(ScopeError::DuplicateChunk(_))
    ));
    assert!(matches!(rank(&VectorIndex::from_entries(vec![]).unwrap(), &[1.0], 3), Err(ScopeError::EmptyIndex)));

    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(dir.path(), vec![]);
    let chunks: Vec<_> = (0..10).map(|i| chunk(&format!("c{i:02}"), &format!("clause number {i} about fees"))).collect();
    let a = build_index(&gw, &chunks).unwrap();
    let b = build_index(&gw, &chunks).unwrap();
    assert_eq!(a.len(), 10);
    assert_eq!(a.dimension(), 64);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(VectorIndex::from_json(&a.to_json()).unwrap(), a);
    assert_eq!(retrieve(&gw, &a, "fees", "pay fees", 15).unwrap().len(), 10);
    let dup = vec![chunks[0].clone(), chunks[0].clone()];
    assert!(matches!(build_index(&gw, &dup), Err(ScopeError::DuplicateChunk(_))));
}

#[test]
fn phrase_context_is_the_enclosing_sentence() {
    let text = "First sentence. We grant a royalty-free license here. Last one.";
    let i = text.find("royalty-free").unwrap();
    assert_eq!(phrase_context(text, Span::new(i, i + 12)), "We grant a royalty-free license here.");
    let text = "line one\nno terminator here";
    assert_eq!(phrase_context(text, Span::new(12, 14)), "no terminator here");
}

#[test]
fn refs_outside_the_retrieved_set_are_dropped() {
    let retrieved = vec![ScoredChunk { chunk_id: "a".into(), score: 1.0 }];
    let refs = validate_refs(&["a".into(), "[a]".into(), "zzz".into()], &retrieved);
    assert_eq!(refs, vec!["a".to_string()]);
}

#[test]
fn define_scenario_and_answer_flow() {
    let dir = tempfile::tempdir().unwrap();
    let chunks = vec![
        chunk("c1", "You grant us a royalty-free license to use your photos."),
        chunk("c2", "You may delete your data at any time from account settings."),
        chunk("c3", "Shipping labels are provided for some orders."),
    ];
    let texts: ChunkTexts = chunks.iter().map(|c| (c.chunk_id.clone(), c.text.clone())).collect();
    let long_story = vec!["word"; 55].join(" ");
    let gw = gateway(
        dir.path(),
        vec![
            Override {
                template: TemplateId::Define,
                key: "royalty-free".into(),
                completion: r#"{"Definition": "Use without paying licensing fees.", "References": ["c1", "ghost"]}"#.into(),
            },
            Override {
                template: TemplateId::Scenario,
                key: "royalty-free".into(),
                completion: format!(r#"{{"Story": "{long_story}"}}"#),
            },
        ],
    );
    let gw_index = build_index(&gw, &chunks).unwrap();
    let persona = Persona::new("p", "Social Media", vec!["You post photos.".into()], vec!["Licenses.".into()]);
    let span = Span::new(15, 27);
    let result = generate_phrase_scope(
        &gw,
        &gw_index,
        &texts,
        &ScopeRequest { chunk_id: "c1", chunk_text: &chunks[0].text, span, persona: &persona, platform: "ServiceX", k: 2 },
    )
    .unwrap();
    assert_eq!(result.phrase, "royalty-free");
    assert_eq!(result.definition_refs, vec!["c1".to_string()]);
    assert_eq!(result.retrieved.len(), 2);
    assert!(result.over_length);
    assert_eq!(result.scenario_word_count, 55);

    let answer = answer_question(&gw, &gw_index, &texts, "Can I delete my data?", "data", "delete", 2).unwrap();
    assert_eq!(answer.retrieved[0].chunk_id, "c2");
    assert!(answer.refs.iter().all(|r| answer.retrieved.iter().any(|x| &x.chunk_id == r)));
    assert!(!answer.refs.is_empty());
    assert!(matches!(
        answer_question(&gw, &gw_index, &texts, "  ", "x", "y", 2),
        Err(ScopeError::EmptyInput("question"))
    ));
}

fn brute_force(entries: &[(String, Vec<f64>)], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt() * q.iter().map(|x| x * x).sum::<f64>().sqrt();
            (id.clone(), if n == 0.0 { 0.0 } else { (dot / n).clamp(-1.0, 1.0) })
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn rank_matches_brute_force(
        dim in 1usize..8,
        n in 1usize..60,
        seed in proptest::collection::vec(-3i32..=3, 8 * 61),
        k in 1usize..20,
    ) {
        // Small integer components make exact ties common.
        let entries: Vec<(String, Vec<f64>)> = (0..n)
            .map(|i| (format!("c{:03}", (i * 37) % 1000), seed[i * dim..(i + 1) * dim].iter().map(|&x| x as f64).collect()))
            .collect();
        let q: Vec<f64> = seed[n * dim..n * dim + dim].iter().map(|&x| x as f64).collect();
        let index = VectorIndex::from_entries(
            entries.iter().map(|(id, v)| IndexEntry { chunk_id: id.clone(), vector: EmbeddingVector::new(v.clone(), id).unwrap() }).collect(),
        ).unwrap();
        let got: Vec<(String, f64)> = rank(&index, &q, k).unwrap().into_iter().map(|r| (r.chunk_id, r.score)).collect();
        prop_assert_eq!(got, brute_force(&entries, &q, k));
    }

    #[test]
    fn cosine_is_bounded(u in proptest::collection::vec(-1e6f64..1e6, 1..16)) {
        let v: Vec<f64> = u.iter().rev().cloned().collect();
        prop_assert!(cosine(&u, &v).unwrap().abs() <= 1.0 + 1e-9);
        if u.iter().any(|&x| x != 0.0) {
            prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}
