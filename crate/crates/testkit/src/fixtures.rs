use std::collections::BTreeMap;
use std::path::PathBuf;

use beamrecall_core::array::{uma8_geometry, StreamPlan};
use beamrecall_core::audio::MultichannelAudio;
use beamrecall_core::index::{Embedder, SemanticIndex, DEFAULT_DIM};
use beamrecall_core::scene::{simulate_scene, synth_speech, SceneSpec, SimulatedScene};
use beamrecall_core::transcribe::{assign_chunks, chunk_segments, load_fixture, DEFAULT_MAX_SENTENCES};

pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Query from the two-podcast scenario.
pub const RECALL_QUERY: &str = "What did I miss when I was listening to the AI conversation?";
pub const RECALL_DURATION_S: f64 = 90.0;
/// (label, azimuth) of the two recall fixture streams: AI talk on the left,
/// market news on the right.
pub const RECALL_STREAMS: [(&str, f64); 2] = [("left", 135.0), ("right", 45.0)];

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Directory of `<label>.json` transcript fixtures for the recall scenario.
pub fn recall_transcripts_dir() -> PathBuf {
    fixtures_dir().join("recall")
}

pub fn recall_golden_path() -> PathBuf {
    fixtures_dir().join("golden").join("recall_ai.json")
}

pub fn recall_plan() -> Vec<StreamPlan> {
    RECALL_STREAMS.iter().map(|&(l, a)| StreamPlan::new(l, a)).collect()
}

/// Chunks and indexes the recall transcripts the way ingest does: streams in
/// plan order, ids counting up from 0.
pub fn build_recall_index() -> SemanticIndex {
    let embedder = Embedder::hash(DEFAULT_DIM);
    let mut index = SemanticIndex::new(DEFAULT_DIM);
    let mut next_id = 0;
    for (label, azimuth) in RECALL_STREAMS {
        let segments = load_fixture(&recall_transcripts_dir().join(format!("{label}.json"))).expect("fixture transcript");
        let spans = chunk_segments(&segments, DEFAULT_MAX_SENTENCES);
        let chunks = assign_chunks(spans, label, azimuth, &mut next_id);
        index.add_chunks(chunks, &embedder).expect("fixture chunks index");
    }
    index
}

pub fn recall_durations() -> BTreeMap<String, f64> {
    RECALL_STREAMS
        .iter()
        .map(|&(l, _)| (l.to_string(), RECALL_DURATION_S))
        .collect()
}

/// Two synthetic talkers at 135° and 45° on the UMA-8 array.
pub fn two_source_spec(duration_s: f64, snr_db: Option<f64>) -> SceneSpec {
    let mut spec = SceneSpec::new(uma8_geometry(), SAMPLE_RATE_HZ)
        .with_source(135.0, synth_speech(11, duration_s, SAMPLE_RATE_HZ, 120.0), 1.0)
        .with_source(45.0, synth_speech(22, duration_s, SAMPLE_RATE_HZ, 210.0), 1.0);
    if let Some(snr) = snr_db {
        spec = spec.with_noise(snr, 5);
    }
    spec
}

pub fn two_source_scene(duration_s: f64, snr_db: Option<f64>) -> SimulatedScene {
    simulate_scene(&two_source_spec(duration_s, snr_db)).expect("valid scene")
}

/// Seven-channel mixture to ingest alongside the recall transcripts.
pub fn recall_mixture() -> MultichannelAudio {
    two_source_scene(RECALL_DURATION_S, Some(30.0)).mixture
}
