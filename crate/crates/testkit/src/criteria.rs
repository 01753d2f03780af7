//! Seeded checks shared by the integration tests and the acceptance target.
//! Each returns `Ok(detail)` on success and `Err(detail)` on failure.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use beamrecall_core::array::{
    angular_distance, mvdr_weights_for_bin, response, separate_streams, srp_phat, steering_per_bin, uma8_geometry,
    CovarianceMatrix, DoaConfig, SeparationConfig, StreamPlan, DEFAULT_SPEED_OF_SOUND,
};
use beamrecall_core::audio::{istft, stft, MultichannelAudio, StftConfig};
use beamrecall_core::index::{EmbeddingVector, SemanticIndex, VectorIndex, DEFAULT_DIM};
use beamrecall_core::index::Embedder;
use beamrecall_core::recall::{answer_query, Llm, QueryContext, RecallConfig, RecallResult, StageError};
use beamrecall_core::scene::{evaluate_streams, stoi, synth_speech};
use beamrecall_core::transcribe::{chunk_segments, split_sentences, DEFAULT_MAX_SENTENCES};

use crate::fixtures::{
    build_recall_index, recall_durations, recall_golden_path, two_source_scene, RECALL_QUERY, SAMPLE_RATE_HZ,
};
use crate::oracle::{brute_force_ranking, missed_by_pairwise_overlap, mvdr_oracle, random_hermitian_pd, DenseMatrix};
use crate::transcripts::{normalize_whitespace, random_transcript};

pub type Check = Result<String, String>;

pub const NUM_BINS: usize = 257;
const BIN_HZ: f64 = SAMPLE_RATE_HZ as f64 / 512.0;

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Check {
    if elapsed.as_secs_f64() < limit_s {
        Ok(format!("{detail}, {:.2}s", elapsed.as_secs_f64()))
    } else {
        Err(format!("{detail}, but took {:.2}s (limit {limit_s}s)", elapsed.as_secs_f64()))
    }
}

fn to_cov(bin: usize, r: &DenseMatrix) -> CovarianceMatrix {
    let m = r.len();
    CovarianceMatrix {
        bin,
        matrix: DMatrix::from_fn(m, m, |i, j| r[i][j]),
    }
}

/// 100 trials, each with its own random Hermitian PD matrix per bin and a
/// random look direction.
pub fn mvdr_correctness() -> Check {
    let t0 = Instant::now();
    let geom = uma8_geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let (mut worst_gain, mut worst_diff) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let az = rng.random_range(0.0..360.0);
        let steering = steering_per_bin(&geom, az, NUM_BINS, BIN_HZ, DEFAULT_SPEED_OF_SOUND);
        for (bin, d) in steering.iter().enumerate() {
            let r = random_hermitian_pd(&mut rng, geom.num_mics());
            let w = mvdr_weights_for_bin(&to_cov(bin, &r), &d.elements).map_err(|e| e.to_string())?;
            let expected = mvdr_oracle(&r, &d.elements);
            worst_gain = worst_gain.max((response(&w, &d.elements) - 1.0).norm());
            for (a, b) in w.iter().zip(&expected) {
                worst_diff = worst_diff.max((a - b).norm());
            }
        }
    }
    let detail = format!("max |w^H d - 1| = {worst_gain:.1e}, max |w - oracle| = {worst_diff:.1e}");
    if worst_gain < 1e-9 && worst_diff < 1e-9 {
        within(t0.elapsed(), 10.0, detail)
    } else {
        Err(detail)
    }
}

pub fn identity_reduction() -> Check {
    let geom = uma8_geometry();
    let m = geom.num_mics() as f64;
    let mut worst = 0.0f64;
    for az in [0.0, 45.0, 135.0, 200.0, 311.5] {
        for d in steering_per_bin(&geom, az, NUM_BINS, BIN_HZ, DEFAULT_SPEED_OF_SOUND) {
            let w = mvdr_weights_for_bin(&CovarianceMatrix::identity(0, geom.num_mics()), &d.elements)
                .map_err(|e| e.to_string())?;
            for (a, b) in w.iter().zip(&d.elements) {
                worst = worst.max((a - b / m).norm());
            }
        }
    }
    let detail = format!("max |w - d/7| = {worst:.1e}");
    if worst < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Top two SRP-PHAT peaks against the true azimuths of the two-source scene.
pub fn doa_accuracy() -> Check {
    let t0 = Instant::now();
    let geom = uma8_geometry();
    let truth = [135.0, 45.0];
    let mut parts = Vec::new();
    let mut ok = true;
    for (snr, tol) in [(None, 5.0), (Some(10.0), 10.0)] {
        let scene = two_source_scene(8.0, snr);
        let tensor = stft(&scene.mixture, StftConfig::default()).map_err(|e| e.to_string())?;
        let est = srp_phat(&tensor, &geom, &DoaConfig::default()).map_err(|e| e.to_string())?;
        let top: Vec<f64> = est.peaks.iter().take(2).map(|p| p.azimuth_deg).collect();
        let err = truth
            .iter()
            .map(|t| top.iter().map(|p| angular_distance(*p, *t)).fold(f64::INFINITY, f64::min))
            .fold(0.0f64, f64::max);
        ok &= top.len() == 2 && err <= tol;
        let name = snr.map_or("clean".to_string(), |s| format!("{s} dB SNR"));
        parts.push(format!("{name}: peaks {top:?}, max error {err:.1} deg (tol {tol})"));
    }
    if ok {
        within(t0.elapsed(), 30.0, parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

/// MVDR output vs the center mic on the noise-free two-source scene.
pub fn beamforming_gain() -> Check {
    let t0 = Instant::now();
    let scene = two_source_scene(8.0, None);
    let plan = [StreamPlan::new("left", 135.0), StreamPlan::new("right", 45.0)];
    let streams =
        separate_streams(&scene.mixture, &uma8_geometry(), &plan, &SeparationConfig::default()).map_err(|e| e.to_string())?;
    let report = evaluate_streams(&scene, &streams).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in &report.streams {
        ok &= s.si_sdr_gain_db() >= 8.0 && s.stoi_gain() >= 0.15;
        parts.push(format!(
            "{}: SI-SDR {:+.1} dB ({:.1} -> {:.1}), STOI {:+.3} ({:.3} -> {:.3})",
            s.label,
            s.si_sdr_gain_db(),
            s.si_sdr_before_db,
            s.si_sdr_after_db,
            s.stoi_gain(),
            s.stoi_before,
            s.stoi_after
        ));
    }
    if ok {
        within(t0.elapsed(), 120.0, parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

pub fn stft_round_trip() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(1..40_000);
        let channels = rng.random_range(1..=3);
        let data: Vec<Vec<f64>> = (0..channels)
            .map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let audio = MultichannelAudio::new(data.clone(), SAMPLE_RATE_HZ).map_err(|e| e.to_string())?;
        let tensor = stft(&audio, StftConfig::default()).map_err(|e| e.to_string())?;
        for (ch, original) in data.iter().enumerate() {
            let single = tensor
                .mono_like(tensor.channel(ch).to_owned())
                .map_err(|e| e.to_string())?;
            let back = istft(&single).map_err(|e| e.to_string())?;
            if back.len() != original.len() {
                return Err(format!("length {} came back as {}", original.len(), back.len()));
            }
            let mse = back.iter().zip(original).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / len as f64;
            worst = worst.max(mse.sqrt());
        }
    }
    let detail = format!("max RMS error {worst:.1e} over 100 signals");
    if worst < 1e-6 {
        within(t0.elapsed(), 5.0, detail)
    } else {
        Err(detail)
    }
}

pub fn stoi_sanity() -> Check {
    let rate = SAMPLE_RATE_HZ;
    let speech = synth_speech(3, 4.0, rate, 150.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let noise: Vec<f64> = (0..speech.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let degraded: Vec<f64> = speech.iter().zip(&noise).map(|(s, n)| s + 0.05 * n).collect();
    let e = |r: Result<f64, _>| r.map_err(|e: beamrecall_core::scene::SceneError| e.to_string());

    let identical = e(stoi(&speech, &speech, rate))?;
    let base = e(stoi(&speech, &degraded, rate))?;
    let scaled_est: Vec<f64> = degraded.iter().map(|v| v * 7.5).collect();
    let scaled_ref: Vec<f64> = speech.iter().map(|v| v * 0.02).collect();
    let scale_dev = (e(stoi(&speech, &scaled_est, rate))? - base)
        .abs()
        .max((e(stoi(&scaled_ref, &degraded, rate))? - base).abs());
    let vs_noise = e(stoi(&speech, &noise, rate))?;

    let detail = format!(
        "stoi(x,x) = {identical:.9}, scale deviation {scale_dev:.1e}, stoi(speech, noise) = {vs_noise:.3}"
    );
    if (identical - 1.0).abs() <= 1e-6 && scale_dev <= 1e-6 && vs_noise < 0.3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    EmbeddingVector::new(&v).expect("nonzero gaussian vector")
}

pub fn index_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let dim = DEFAULT_DIM;
    let vectors: Vec<EmbeddingVector> = (0..1000).map(|_| random_unit(&mut rng, dim)).collect();
    let mut ids: Vec<u64> = (0..1000).map(|i| i * 7 + 3).collect();
    ids.reverse();
    let mut index = VectorIndex::new(dim);
    index.add(&ids, &vectors).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f32>> = vectors.iter().map(|v| v.values().to_vec()).collect();

    for q in 0..50 {
        let query = random_unit(&mut rng, dim);
        let got: Vec<(u64, f64)> = index
            .search(&query, 10)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| (h.chunk_id, h.score))
            .collect();
        let expected = brute_force_ranking(&rows, &ids, query.values(), 10);
        if got != expected {
            return Err(format!("query {q}: ranking {got:?} differs from full scan {expected:?}"));
        }
    }

    let bytes = index.to_bytes();
    let restored = VectorIndex::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("index.bin");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = VectorIndex::load(&path).map_err(|e| e.to_string())?;
    let on_disk = std::fs::read(&path).map_err(|e| e.to_string())?;
    if restored != index || loaded != index || restored.to_bytes() != bytes || on_disk != bytes {
        return Err("save/load round trip is not bit-exact".into());
    }
    Ok(format!("50 queries x top-10 match full scan over 1000x{dim}; {} byte file round-trips", bytes.len()))
}

pub fn chunker_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    for case in 0..200 {
        let generated = random_transcript(&mut rng);
        let spans = chunk_segments(&generated.segments, DEFAULT_MAX_SENTENCES);
        let fail = |what: &str| Err(format!("case {case}: {what}; segments {:?}", generated.segments));

        let seg_text = generated.segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        let chunk_text = spans.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        if normalize_whitespace(&seg_text) != normalize_whitespace(&chunk_text) {
            return fail("chunk text differs from segment text");
        }
        let n = generated.sentences.len();
        if spans.len() != n.div_ceil(DEFAULT_MAX_SENTENCES) {
            return fail(&format!("{} chunks for {n} sentences", spans.len()));
        }
        for (i, span) in spans.iter().enumerate() {
            if span.sentence_count > DEFAULT_MAX_SENTENCES || split_sentences(&span.text).len() > DEFAULT_MAX_SENTENCES {
                return fail(&format!("chunk {i} has more than {DEFAULT_MAX_SENTENCES} sentences"));
            }
            let members = &generated.sentences[i * DEFAULT_MAX_SENTENCES..((i + 1) * DEFAULT_MAX_SENTENCES).min(n)];
            let first = members.iter().map(|s| s.first_segment).min().unwrap();
            let last = members.iter().map(|s| s.last_segment).max().unwrap();
            let (start, end) = (generated.segments[first].start_s, generated.segments[last].end_s);
            if span.start_s != start || span.end_s != end {
                return fail(&format!(
                    "chunk {i} spans [{}, {}], constituents span [{start}, {end}]",
                    span.start_s, span.end_s
                ));
            }
        }
    }
    Ok("200 randomized segment lists".into())
}

fn run_query(index: &SemanticIndex, query: &str, config: &RecallConfig) -> Result<RecallResult, StageError> {
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

pub fn attended_ids(r: &RecallResult) -> BTreeSet<u64> {
    r.attended.iter().flat_map(|s| s.chunk_ids.iter().copied()).collect()
}

pub fn missed_ids(r: &RecallResult) -> BTreeSet<u64> {
    r.missed
        .iter()
        .flat_map(|m| m.snippets.iter().flat_map(|s| s.chunk_ids.iter().copied()))
        .collect()
}

pub fn recall_golden() -> Check {
    let t0 = Instant::now();
    let index = build_recall_index();
    let config = RecallConfig::default();
    let result = run_query(&index, RECALL_QUERY, &config).map_err(|e| e.to_string())?;
    if result.attended_direction != "left" {
        return Err(format!("attended direction {:?}, expected \"left\"", result.attended_direction));
    }
    let intervals: Vec<(f64, f64)> = result.attended.iter().map(|s| (s.start_s, s.end_s)).collect();
    let chunks: Vec<_> = index.store.chunks().cloned().collect();
    let oracle = missed_by_pairwise_overlap(&intervals, &chunks, &result.attended_direction, config.min_overlap_s);
    let got = missed_ids(&result);
    if got != oracle {
        return Err(format!("missed {got:?}, pairwise oracle {oracle:?}"));
    }
    let golden = std::fs::read_to_string(recall_golden_path()).map_err(|e| e.to_string())?;
    if format!("{}\n", result.to_json_pretty()) != golden {
        return Err("RecallResult differs from the frozen golden".into());
    }
    within(
        t0.elapsed(),
        5.0,
        format!("attended left, {} missed chunks match oracle, golden byte-identical", got.len()),
    )
}

pub const MONOTONICITY_QUERIES: [&str; 4] = [
    RECALL_QUERY,
    "What did I miss during the talk about interest rates?",
    "Anything on gold prices?",
    "What was said regarding the puppy?",
];

/// 50 random configs; each is compared with a larger `window_k` and a
/// smaller `min_overlap_s`. A config whose filter rejects everything must
/// keep doing so in both variants.
pub fn recall_monotonicity() -> Check {
    let index = build_recall_index();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0010);
    let mut answered = 0;
    for case in 0..50 {
        let base = RecallConfig {
            top_k: rng.random_range(1..=12),
            window_k: rng.random_range(0..=3),
            min_overlap_s: rng.random_range(0.1..4.0),
            relevance_threshold: rng.random_range(0.05..0.4),
            ..RecallConfig::default()
        };
        let query = MONOTONICITY_QUERIES[rng.random_range(0..MONOTONICITY_QUERIES.len())];
        let wider = RecallConfig {
            window_k: base.window_k + rng.random_range(1..=3),
            ..base.clone()
        };
        let looser = RecallConfig {
            min_overlap_s: base.min_overlap_s * rng.random_range(0.05..1.0),
            ..base.clone()
        };
        let (r0, rw, rl) = (
            run_query(&index, query, &base),
            run_query(&index, query, &wider),
            run_query(&index, query, &looser),
        );
        match (r0, rw, rl) {
            (Ok(r0), Ok(rw), Ok(rl)) => {
                answered += 1;
                if !attended_ids(&r0).is_subset(&attended_ids(&rw)) {
                    return Err(format!("case {case}: window_k {} -> {} shrank attended", base.window_k, wider.window_k));
                }
                if !missed_ids(&r0).is_subset(&missed_ids(&rl)) {
                    return Err(format!(
                        "case {case}: min_overlap_s {} -> {} shrank missed",
                        base.min_overlap_s, looser.min_overlap_s
                    ));
                }
            }
            (Err(_), Err(_), Err(_)) => {}
            _ => return Err(format!("case {case}: variants disagree on whether {query:?} has an answer")),
        }
    }
    if answered < 25 {
        return Err(format!("only {answered} of 50 configs produced a result"));
    }
    Ok(format!("50 configs, {answered} with results, no shrinkage"))
}
