//! The "what did I miss" query pipeline.
//!
//! A query is answered in six stages: topic extraction, retrieval over all
//! streams (the best hit fixes the attended direction), relevance filtering,
//! window expansion around each surviving chunk, lookup of temporally
//! overlapping chunks in the other directions, and a contrastive summary.

mod llm;
mod pipeline;

pub use llm::{stub_topic, ChatMessage, Llm, LlmBackend, MAX_TOPIC_WORDS};
pub use pipeline::{
    answer_query, expand_window, filter_relevant, find_missed, merge_snippets, retrieve_attended,
    snippet_from_positions, summarize_contrastive, stub_summary, QueryContext, SUMMARY_EXCERPT_CHARS,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::IndexError;
use crate::remote::RemoteError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceMode {
    Llm,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecallConfig {
    pub top_k: usize,
    pub window_k: usize,
    pub min_overlap_s: f64,
    pub relevance_mode: RelevanceMode,
    pub relevance_threshold: f64,
}

impl Default for RecallConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            window_k: 2,
            min_overlap_s: 0.5,
            relevance_mode: RelevanceMode::Llm,
            relevance_threshold: 0.35,
        }
    }
}

impl RecallConfig {
    pub fn validate(&self) -> Result<(), RecallError> {
        if self.top_k == 0 {
            return Err(RecallError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !(self.min_overlap_s > 0.0 && self.min_overlap_s.is_finite()) {
            return Err(RecallError::InvalidConfig("min_overlap_s must be positive".into()));
        }
        if !self.relevance_threshold.is_finite() {
            return Err(RecallError::InvalidConfig("relevance_threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Contiguous run of chunks from one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub direction_label: String,
    pub azimuth_deg: f64,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    pub chunk_ids: Vec<u64>,
    pub first_position: usize,
    pub last_position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissedDirection {
    pub direction_label: String,
    pub azimuth_deg: f64,
    pub snippets: Vec<Snippet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackRef {
    pub direction_label: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub query: String,
    pub topic: String,
    pub attended_direction: String,
    pub attended_azimuth_deg: f64,
    pub attended: Vec<Snippet>,
    pub missed: Vec<MissedDirection>,
    pub summary: String,
    pub playback_refs: Vec<PlaybackRef>,
}

impl RecallResult {
    /// Canonical JSON text shared by every front end.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("recall results always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TopicExtraction,
    Retrieval,
    RelevanceFilter,
    WindowExpansion,
    MissedLookup,
    Summary,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::TopicExtraction => "topic_extraction",
            Stage::Retrieval => "retrieval",
            Stage::RelevanceFilter => "relevance_filter",
            Stage::WindowExpansion => "window_expansion",
            Stage::MissedLookup => "missed_lookup",
            Stage::Summary => "summary",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum RecallError {
    #[error("no topic could be extracted from the query")]
    NoTopic,
    #[error("no retrieved chunk is relevant to {topic:?}")]
    EmptyAttended { topic: String },
    #[error("chunk {0} is not in the metadata store")]
    UnknownChunk(u64),
    #[error("snippets from different streams cannot be merged")]
    MixedStreams,
    #[error("invalid recall config: {0}")]
    InvalidConfig(String),
    #[error("LLM backend unreachable after {attempts} attempt(s): {detail}")]
    BackendUnreachable { attempts: u32, detail: String },
    #[error("malformed LLM response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl RecallError {
    pub fn code(&self) -> &'static str {
        match self {
            RecallError::NoTopic => "no_topic",
            RecallError::EmptyAttended { .. } => "empty_attended",
            RecallError::UnknownChunk(_) => "unknown_chunk",
            RecallError::MixedStreams => "mixed_streams",
            RecallError::InvalidConfig(_) => "invalid_config",
            RecallError::BackendUnreachable { .. } => "backend_unreachable",
            RecallError::MalformedResponse(_) => "malformed_response",
            RecallError::Index(IndexError::EmptyIndex) => "empty_index",
            RecallError::Index(IndexError::NoTokens) => "no_tokens",
            RecallError::Index(_) => "index_error",
        }
    }

    /// True for failures caused by the request rather than by a backend.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            RecallError::NoTopic
                | RecallError::EmptyAttended { .. }
                | RecallError::InvalidConfig(_)
                | RecallError::Index(IndexError::NoTokens)
        )
    }
}

impl From<RemoteError> for RecallError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Unreachable { attempts, detail } => Self::BackendUnreachable { attempts, detail },
            RemoteError::Malformed(m) => Self::MalformedResponse(m),
        }
    }
}

/// A pipeline failure tagged with the stage that produced it.
#[derive(Debug, Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: RecallError,
}

impl StageError {
    pub fn new(stage: Stage, source: RecallError) -> Self {
        Self { stage, source }
    }
}
