use std::collections::BTreeMap;

use super::{IndexError, Result};
use crate::transcribe::Chunk;

/// chunk_id → chunk, with per-stream ordering by `stream_position`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataStore {
    chunks: BTreeMap<u64, Chunk>,
    streams: BTreeMap<String, Vec<u64>>,
}

impl MetadataStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_chunks(chunks: impl IntoIterator<Item = Chunk>) -> Result<Self> {
        let mut store = Self::new();
        for c in chunks {
            store.insert(c)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, chunk: Chunk) -> Result<()> {
        if self.chunks.contains_key(&chunk.chunk_id) {
            return Err(IndexError::DuplicateId(chunk.chunk_id));
        }
        let positions = self.streams.entry(chunk.direction_label.clone()).or_default();
        let at = positions.partition_point(|id| self.chunks[id].stream_position < chunk.stream_position);
        if positions.get(at).is_some_and(|id| self.chunks[id].stream_position == chunk.stream_position) {
            return Err(IndexError::InvalidChunk(format!(
                "stream {:?} already has position {}",
                chunk.direction_label, chunk.stream_position
            )));
        }
        positions.insert(at, chunk.chunk_id);
        self.chunks.insert(chunk.chunk_id, chunk);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<&Chunk> {
        self.chunks.get(&id)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.chunks.keys().copied()
    }

    /// All chunks in id order.
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    /// Direction labels in lexicographic order.
    pub fn directions(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    /// Chunks of one stream ordered by position.
    pub fn stream(&self, label: &str) -> Vec<&Chunk> {
        self.streams
            .get(label)
            .map(|ids| ids.iter().map(|id| &self.chunks[id]).collect())
            .unwrap_or_default()
    }

    pub fn next_id(&self) -> u64 {
        self.chunks.keys().next_back().map_or(0, |id| id + 1)
    }

    pub fn to_json(&self) -> Result<String> {
        let records: Vec<&Chunk> = self.chunks.values().collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<Chunk> = serde_json::from_str(text).map_err(|e| IndexError::CorruptFile(e.to_string()))?;
        Self::from_chunks(records)
    }
}
