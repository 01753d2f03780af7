use serde::{Deserialize, Serialize};

use super::sentences::{is_terminated, split_sentences};
use super::TranscriptSegment;

pub const DEFAULT_MAX_SENTENCES: usize = 3;

/// A transcript unit with what/where/when metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: u64,
    pub text: String,
    pub direction_label: String,
    pub azimuth_deg: f64,
    pub start_s: f64,
    pub end_s: f64,
    /// 0-based order within the chunk's stream.
    pub stream_position: usize,
}

impl Chunk {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn overlap_s(&self, start_s: f64, end_s: f64) -> f64 {
        (self.end_s.min(end_s) - self.start_s.max(start_s)).max(0.0)
    }
}

/// Sentence group before it is attached to a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSpan {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub sentence_count: usize,
}

#[derive(Debug, Clone)]
struct Sentence {
    text: String,
    start_s: f64,
    end_s: f64,
}

/// Sentences with the time span of the segments they came from. A sentence
/// left open at the end of a segment continues into the next and belongs to
/// the segment where it ends.
fn timed_sentences(segments: &[TranscriptSegment]) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut pending: Option<Sentence> = None;
    for seg in segments {
        let pieces = split_sentences(&seg.text);
        let count = pieces.len();
        for (i, piece) in pieces.into_iter().enumerate() {
            let mut sentence = Sentence {
                text: piece,
                start_s: seg.start_s,
                end_s: seg.end_s,
            };
            if let Some(p) = pending.take() {
                sentence.text = format!("{} {}", p.text, sentence.text);
                sentence.start_s = p.start_s.min(seg.start_s);
                sentence.end_s = p.end_s.max(seg.end_s);
            }
            if i + 1 == count && !is_terminated(&sentence.text) {
                pending = Some(sentence);
            } else {
                out.push(sentence);
            }
        }
    }
    out.extend(pending);
    out
}

/// Greedy grouping of consecutive sentences, `max_sentences` per chunk; the
/// last chunk holds the remainder.
pub fn chunk_segments(segments: &[TranscriptSegment], max_sentences: usize) -> Vec<ChunkSpan> {
    let max = max_sentences.max(1);
    timed_sentences(segments)
        .chunks(max)
        .map(|group| ChunkSpan {
            text: group.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" "),
            start_s: group.iter().map(|s| s.start_s).fold(f64::INFINITY, f64::min),
            end_s: group.iter().map(|s| s.end_s).fold(f64::NEG_INFINITY, f64::max),
            sentence_count: group.len(),
        })
        .collect()
}

/// Attaches stream metadata, numbering chunks from `next_id` upward.
pub fn assign_chunks(spans: Vec<ChunkSpan>, direction_label: &str, azimuth_deg: f64, next_id: &mut u64) -> Vec<Chunk> {
    spans
        .into_iter()
        .enumerate()
        .map(|(position, span)| {
            let chunk_id = *next_id;
            *next_id += 1;
            Chunk {
                chunk_id,
                text: span.text,
                direction_label: direction_label.to_string(),
                azimuth_deg,
                start_s: span.start_s,
                end_s: span.end_s,
                stream_position: position,
            }
        })
        .collect()
}
