use std::collections::BTreeSet;

use beamrecall_core::index::{Embedder, MetadataStore, SemanticIndex, DEFAULT_DIM};
use beamrecall_core::recall::{
    answer_query, expand_window, merge_snippets, snippet_from_positions, Llm, QueryContext, RecallConfig, RecallError,
    RecallResult, Stage, StageError,
};
use beamrecall_core::transcribe::Chunk;
use beamrecall_testkit::criteria;
use beamrecall_testkit::fixtures::*;
use beamrecall_testkit::oracle::{interval_union, missed_by_pairwise_overlap};
use proptest::prelude::*;

fn try_run(index: &SemanticIndex, query: &str, config: &RecallConfig) -> Result<RecallResult, StageError> {
    let embedder = Embedder::hash(DEFAULT_DIM);
    let llm = Llm::stub();
    let durations = recall_durations();
    let ctx = QueryContext {
        index,
        embedder: &embedder,
        llm: &llm,
        stream_durations: &durations,
    };
    answer_query(&ctx, query, config)
}

fn run(index: &SemanticIndex, query: &str, config: &RecallConfig) -> RecallResult {
    try_run(index, query, config).unwrap()
}

#[test]
fn matches_frozen_golden() {
    let index = build_recall_index();
    let result = run(&index, RECALL_QUERY, &RecallConfig::default());
    let json = result.to_json_pretty();
    let path = recall_golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, format!("{json}\n")).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file; run with UPDATE_GOLDEN=1 to create");
    assert_eq!(format!("{json}\n"), golden);
}

#[test]
fn attended_direction_and_missed_set() {
    let index = build_recall_index();
    let config = RecallConfig::default();
    let result = run(&index, RECALL_QUERY, &config);
    assert_eq!(result.topic, "AI");
    assert_eq!(result.attended_direction, "left");
    assert_eq!(result.attended_azimuth_deg, 135.0);
    assert!(result.attended.iter().all(|s| s.direction_label == "left"));

    let intervals: Vec<(f64, f64)> = result.attended.iter().map(|s| (s.start_s, s.end_s)).collect();
    let chunks: Vec<_> = index.store.chunks().cloned().collect();
    let expected = missed_by_pairwise_overlap(&intervals, &chunks, "left", config.min_overlap_s);
    let got: BTreeSet<u64> = result
        .missed
        .iter()
        .flat_map(|m| m.snippets.iter().flat_map(|s| s.chunk_ids.iter().copied()))
        .collect();
    assert_eq!(got, expected);
    assert!(!got.is_empty());
    assert!(result.missed.iter().all(|m| m.direction_label == "right"));
}

#[test]
fn result_invariants_hold() {
    let index = build_recall_index();
    let result = run(&index, RECALL_QUERY, &RecallConfig::default());
    let all = result.attended.iter().chain(result.missed.iter().flat_map(|m| &m.snippets));
    for s in all {
        assert!(s.start_s < s.end_s);
        for id in &s.chunk_ids {
            assert!(index.store.get(*id).is_some());
        }
    }
    for r in &result.playback_refs {
        assert!(r.start_s >= 0.0 && r.end_s <= RECALL_DURATION_S && r.start_s <= r.end_s);
    }
    let n = result.attended.len() + result.missed.iter().map(|m| m.snippets.len()).sum::<usize>();
    assert_eq!(result.playback_refs.len(), n);
}

#[test]
fn deterministic_output() {
    let a = run(&build_recall_index(), RECALL_QUERY, &RecallConfig::default()).to_json_pretty();
    let b = run(&build_recall_index(), RECALL_QUERY, &RecallConfig::default()).to_json_pretty();
    assert_eq!(a, b);
}

#[test]
fn missing_topic_fails_at_first_stage() {
    let index = build_recall_index();
    let embedder = Embedder::hash(DEFAULT_DIM);
    let llm = Llm::stub();
    let durations = recall_durations();
    let ctx = QueryContext {
        index: &index,
        embedder: &embedder,
        llm: &llm,
        stream_durations: &durations,
    };
    let err = answer_query(&ctx, "Summarize what I missed.", &RecallConfig::default()).unwrap_err();
    assert_eq!(err.stage, Stage::TopicExtraction);
    assert!(matches!(err.source, RecallError::NoTopic));

    let err = answer_query(&ctx, "Tell me about gardening.", &RecallConfig::default()).unwrap_err();
    assert_eq!(err.stage, Stage::RelevanceFilter);
    assert!(matches!(err.source, RecallError::EmptyAttended { .. }));
}

#[test]
fn monotone_in_window_and_overlap() {
    println!("{}", criteria::recall_monotonicity().unwrap());
}

fn stream_store(n: usize) -> MetadataStore {
    MetadataStore::from_chunks((0..n).map(|p| Chunk {
        chunk_id: 100 + p as u64,
        text: format!("c{p}"),
        direction_label: "s".into(),
        azimuth_deg: 90.0,
        start_s: p as f64 * 4.0,
        end_s: p as f64 * 4.0 + 4.0,
        stream_position: p,
    }))
    .unwrap()
}

proptest! {
    #[test]
    fn merge_equals_marked_union(ranges in prop::collection::vec((0usize..30, 0usize..5), 1..8)) {
        let store = stream_store(40);
        let ranges: Vec<(usize, usize)> = ranges.into_iter().map(|(a, len)| (a, a + len)).collect();
        let snippets = ranges
            .iter()
            .map(|&(a, b)| snippet_from_positions(&store, "s", a, b).unwrap())
            .collect();
        let merged = merge_snippets(snippets, &store).unwrap();
        let got: Vec<(usize, usize)> = merged.iter().map(|s| (s.first_position, s.last_position)).collect();
        prop_assert_eq!(got, interval_union(&ranges));
        for s in &merged {
            prop_assert_eq!(s.start_s, s.first_position as f64 * 4.0);
            prop_assert_eq!(s.end_s, s.last_position as f64 * 4.0 + 4.0);
            prop_assert_eq!(s.chunk_ids.len(), s.last_position - s.first_position + 1);
        }
    }

    #[test]
    fn window_is_clamped_to_stream(pos in 0usize..40, k in 0usize..6) {
        let store = stream_store(40);
        let s = expand_window(100 + pos as u64, &store, k).unwrap();
        prop_assert_eq!(s.first_position, pos.saturating_sub(k));
        prop_assert_eq!(s.last_position, (pos + k).min(39));
    }
}

#[test]
fn merge_rejects_mixed_streams() {
    let mut store = stream_store(3);
    store
        .insert(Chunk {
            chunk_id: 1,
            text: "x".into(),
            direction_label: "t".into(),
            azimuth_deg: 0.0,
            start_s: 0.0,
            end_s: 1.0,
            stream_position: 0,
        })
        .unwrap();
    let a = snippet_from_positions(&store, "s", 0, 1).unwrap();
    let b = snippet_from_positions(&store, "t", 0, 0).unwrap();
    assert!(matches!(merge_snippets(vec![a, b], &store), Err(RecallError::MixedStreams)));
    assert!(matches!(expand_window(999, &store, 1), Err(RecallError::UnknownChunk(999))));
}
