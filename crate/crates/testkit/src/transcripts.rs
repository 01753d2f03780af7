use rand::Rng;

use beamrecall_core::transcribe::TranscriptSegment;

const WORDS: [&str; 16] = [
    "market", "rates", "model", "puppy", "quietly", "research", "bread", "the", "studio", "gold", "we", "think",
    "version", "3.5", "again", "listeners",
];
const INNER: [&str; 4] = ["Dr.", "e.g.", "Mr.", "etc."];
const ENDINGS: [&str; 5] = [".", "?", "!", "?!", "..."];

/// A sentence of a generated transcript and the segments it spans.
#[derive(Debug, Clone)]
pub struct GeneratedSentence {
    pub text: String,
    pub first_segment: usize,
    pub last_segment: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratedTranscript {
    pub segments: Vec<TranscriptSegment>,
    pub sentences: Vec<GeneratedSentence>,
}

/// Random sentences cut into segments at random word boundaries, so a
/// sentence may straddle segments and a segment may hold several sentences.
/// The final sentence is sometimes left unterminated.
pub fn random_transcript(rng: &mut impl Rng) -> GeneratedTranscript {
    let n_sentences = rng.random_range(1..=14);
    let mut words: Vec<(String, usize)> = Vec::new();
    for s in 0..n_sentences {
        let len = rng.random_range(1..=9);
        for w in 0..len {
            let mut word = if w > 0 && w + 1 < len && rng.random_bool(0.15) {
                INNER[rng.random_range(0..INNER.len())].to_string()
            } else {
                WORDS[rng.random_range(0..WORDS.len())].to_string()
            };
            if w == 0 {
                let mut c = word.chars();
                word = c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default();
            }
            if w + 1 == len && !(s + 1 == n_sentences && rng.random_bool(0.3)) {
                word.push_str(ENDINGS[rng.random_range(0..ENDINGS.len())]);
            }
            words.push((word, s));
        }
    }

    let mut segments = Vec::new();
    let mut segment_of_word = Vec::with_capacity(words.len());
    let mut t = rng.random_range(0.0..2.0);
    let mut i = 0;
    while i < words.len() {
        let take = rng.random_range(1..=6).min(words.len() - i);
        let text = words[i..i + take].iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>().join(" ");
        let dur = rng.random_range(0.4..4.0);
        segments.push(TranscriptSegment {
            text,
            start_s: t,
            end_s: t + dur,
        });
        segment_of_word.extend(std::iter::repeat_n(segments.len() - 1, take));
        t += dur + rng.random_range(0.0..0.6);
        i += take;
    }

    let sentences = (0..n_sentences)
        .map(|s| {
            let idx: Vec<usize> = (0..words.len()).filter(|&k| words[k].1 == s).collect();
            GeneratedSentence {
                text: idx.iter().map(|&k| words[k].0.as_str()).collect::<Vec<_>>().join(" "),
                first_segment: segment_of_word[idx[0]],
                last_segment: segment_of_word[*idx.last().unwrap()],
            }
        })
        .collect();
    GeneratedTranscript { segments, sentences }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
