use std::collections::BTreeMap;

use super::{
    Llm, MissedDirection, PlaybackRef, RecallConfig, RecallError, RecallResult, RelevanceMode, Snippet, Stage,
    StageError,
};
use crate::index::{Embedder, MetadataStore, SemanticIndex};
use crate::transcribe::Chunk;

pub const SUMMARY_EXCERPT_CHARS: usize = 200;

/// Everything a query reads: one session's index plus the backends.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub index: &'a SemanticIndex,
    pub embedder: &'a Embedder,
    pub llm: &'a Llm,
    /// Stream label → duration, used to clamp playback references.
    pub stream_durations: &'a BTreeMap<String, f64>,
}

/// Top-k search over every stream; the best hit's direction is taken as the
/// attended one and the hits are narrowed to it.
pub fn retrieve_attended(
    topic: &str,
    index: &SemanticIndex,
    embedder: &Embedder,
    config: &RecallConfig,
) -> Result<(String, Vec<(Chunk, f64)>), RecallError> {
    let query = embedder.embed(topic)?;
    let hits = index.search(&query, config.top_k)?;
    let direction = hits
        .first()
        .map(|(c, _)| c.direction_label.clone())
        .ok_or(RecallError::Index(crate::index::IndexError::EmptyIndex))?;
    let attended = hits.into_iter().filter(|(c, _)| c.direction_label == direction).collect();
    Ok((direction, attended))
}

/// Keeps candidates judged relevant, preserving order. The stub backend has
/// no judgement of its own and falls back to the score threshold.
pub fn filter_relevant(
    topic: &str,
    candidates: Vec<(Chunk, f64)>,
    llm: &Llm,
    config: &RecallConfig,
) -> Result<Vec<(Chunk, f64)>, RecallError> {
    let by_threshold = |cands: Vec<(Chunk, f64)>| {
        cands
            .into_iter()
            .filter(|(_, score)| *score >= config.relevance_threshold)
            .collect()
    };
    if config.relevance_mode == RelevanceMode::Threshold || llm.is_stub() {
        return Ok(by_threshold(candidates));
    }
    let mut kept = Vec::new();
    for (chunk, score) in candidates {
        if llm.judge_relevance(topic, &chunk.text)?.unwrap_or(score >= config.relevance_threshold) {
            kept.push((chunk, score));
        }
    }
    Ok(kept)
}

/// Snippet covering positions `first..=last` of one stream, clamped to the
/// positions that exist.
pub fn snippet_from_positions(store: &MetadataStore, label: &str, first: usize, last: usize) -> Option<Snippet> {
    let chunks: Vec<&Chunk> = store
        .stream(label)
        .into_iter()
        .filter(|c| (first..=last).contains(&c.stream_position))
        .collect();
    let head = chunks.first()?;
    Some(Snippet {
        direction_label: label.to_string(),
        azimuth_deg: head.azimuth_deg,
        start_s: chunks.iter().map(|c| c.start_s).fold(f64::INFINITY, f64::min),
        end_s: chunks.iter().map(|c| c.end_s).fold(f64::NEG_INFINITY, f64::max),
        text: chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" "),
        chunk_ids: chunks.iter().map(|c| c.chunk_id).collect(),
        first_position: head.stream_position,
        last_position: chunks.last().map_or(head.stream_position, |c| c.stream_position),
    })
}

/// The centroid chunk with up to `k` neighbours on each side in its stream.
pub fn expand_window(centroid_id: u64, store: &MetadataStore, k: usize) -> Result<Snippet, RecallError> {
    let c = store.get(centroid_id).ok_or(RecallError::UnknownChunk(centroid_id))?;
    snippet_from_positions(
        store,
        &c.direction_label,
        c.stream_position.saturating_sub(k),
        c.stream_position.saturating_add(k),
    )
    .ok_or(RecallError::UnknownChunk(centroid_id))
}

/// Unions overlapping or adjacent position ranges of one stream.
pub fn merge_snippets(mut snippets: Vec<Snippet>, store: &MetadataStore) -> Result<Vec<Snippet>, RecallError> {
    let Some(label) = snippets.first().map(|s| s.direction_label.clone()) else {
        return Ok(Vec::new());
    };
    if snippets.iter().any(|s| s.direction_label != label) {
        return Err(RecallError::MixedStreams);
    }
    snippets.sort_by_key(|s| (s.first_position, s.last_position));
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for s in &snippets {
        match ranges.last_mut() {
            Some((_, last)) if s.first_position <= *last + 1 => *last = (*last).max(s.last_position),
            _ => ranges.push((s.first_position, s.last_position)),
        }
    }
    let mut out: Vec<Snippet> = ranges
        .into_iter()
        .filter_map(|(a, b)| snippet_from_positions(store, &label, a, b))
        .collect();
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.first_position.cmp(&b.first_position)));
    Ok(out)
}

/// Chunks of every other direction overlapping some attended snippet by at
/// least `min_overlap_s`, grouped into runs of adjacent positions.
pub fn find_missed(attended: &[Snippet], store: &MetadataStore, config: &RecallConfig) -> Vec<MissedDirection> {
    let attended_labels: Vec<&str> = attended.iter().map(|s| s.direction_label.as_str()).collect();
    store
        .directions()
        .filter(|d| !attended_labels.contains(d))
        .filter_map(|label| {
            let included: Vec<&Chunk> = store
                .stream(label)
                .into_iter()
                .filter(|c| attended.iter().any(|s| c.overlap_s(s.start_s, s.end_s) >= config.min_overlap_s))
                .collect();
            let mut runs: Vec<(usize, usize)> = Vec::new();
            for c in &included {
                match runs.last_mut() {
                    Some((_, last)) if c.stream_position == *last + 1 => *last = c.stream_position,
                    _ => runs.push((c.stream_position, c.stream_position)),
                }
            }
            let snippets: Vec<Snippet> = runs
                .into_iter()
                .filter_map(|(a, b)| snippet_from_positions(store, label, a, b))
                .collect();
            let azimuth_deg = snippets.first()?.azimuth_deg;
            Some(MissedDirection {
                direction_label: label.to_string(),
                azimuth_deg,
                snippets,
            })
        })
        .collect()
}

fn excerpt(text: &str) -> String {
    text.chars().take(SUMMARY_EXCERPT_CHARS).collect()
}

/// Template summary used by the stub backend: one bullet per missed direction.
pub fn stub_summary(topic: &str, attended_direction: &str, missed: &[MissedDirection]) -> String {
    if missed.is_empty() {
        return format!(
            "While you were listening to {topic} ({attended_direction}), nothing was said in the other directions during the matched intervals."
        );
    }
    missed
        .iter()
        .map(|m| {
            let excerpts: Vec<String> = m.snippets.iter().map(|s| excerpt(&s.text)).collect();
            format!(
                "- While you were listening to {topic} ({attended_direction}), you missed ({}): {}",
                m.direction_label,
                excerpts.join(" | ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn summarize_contrastive(
    topic: &str,
    attended: &[Snippet],
    missed: &[MissedDirection],
    llm: &Llm,
) -> Result<String, RecallError> {
    let attended_direction = attended.first().map_or("", |s| s.direction_label.as_str());
    if missed.is_empty() || llm.is_stub() {
        return Ok(stub_summary(topic, attended_direction, missed));
    }
    let mut prompt = format!("Topic the listener followed: {topic}\nAttended direction: {attended_direction}\n\nAttended excerpts:\n");
    for s in attended {
        prompt.push_str(&format!("[{:.1}-{:.1}s] {}\n", s.start_s, s.end_s, s.text));
    }
    for m in missed {
        prompt.push_str(&format!("\nMissed direction: {}\n", m.direction_label));
        for s in &m.snippets {
            prompt.push_str(&format!("[{:.1}-{:.1}s] {}\n", s.start_s, s.end_s, s.text));
        }
    }
    match llm.summarize(&prompt)? {
        Some(text) if !text.trim().is_empty() => Ok(text),
        Some(_) => Err(RecallError::MalformedResponse("empty summary".into())),
        None => Ok(stub_summary(topic, attended_direction, missed)),
    }
}

fn playback_ref(s: &Snippet, durations: &BTreeMap<String, f64>) -> PlaybackRef {
    let limit = durations.get(&s.direction_label).copied().unwrap_or(f64::INFINITY);
    PlaybackRef {
        direction_label: s.direction_label.clone(),
        start_s: s.start_s.clamp(0.0, limit),
        end_s: s.end_s.clamp(0.0, limit),
    }
}

pub fn answer_query(ctx: &QueryContext<'_>, query: &str, config: &RecallConfig) -> Result<RecallResult, StageError> {
    let at = |stage: Stage| move |e: RecallError| StageError::new(stage, e);
    config.validate().map_err(at(Stage::Retrieval))?;

    let topic = ctx.llm.extract_topic(query).map_err(at(Stage::TopicExtraction))?;
    let (direction, candidates) =
        retrieve_attended(&topic, ctx.index, ctx.embedder, config).map_err(at(Stage::Retrieval))?;
    let relevant = filter_relevant(&topic, candidates, ctx.llm, config).map_err(at(Stage::RelevanceFilter))?;
    if relevant.is_empty() {
        return Err(StageError::new(Stage::RelevanceFilter, RecallError::EmptyAttended { topic }));
    }

    let store = &ctx.index.store;
    let windows = relevant
        .iter()
        .map(|(c, _)| expand_window(c.chunk_id, store, config.window_k))
        .collect::<Result<Vec<_>, _>>()
        .map_err(at(Stage::WindowExpansion))?;
    let attended = merge_snippets(windows, store).map_err(at(Stage::WindowExpansion))?;
    let attended_azimuth_deg = attended.first().map_or(0.0, |s| s.azimuth_deg);

    let missed = find_missed(&attended, store, config);
    let summary = summarize_contrastive(&topic, &attended, &missed, ctx.llm).map_err(at(Stage::Summary))?;

    let playback_refs = attended
        .iter()
        .chain(missed.iter().flat_map(|m| &m.snippets))
        .map(|s| playback_ref(s, ctx.stream_durations))
        .collect();

    Ok(RecallResult {
        query: query.to_string(),
        topic,
        attended_direction: direction,
        attended_azimuth_deg,
        attended,
        missed,
        summary,
        playback_refs,
    })
}
