//! Embeddings, the exact cosine index and the chunk metadata store.

mod embed;
mod store;
mod vector;

pub use embed::{hash_embed, Embedder, EmbeddingProvider, EmbeddingVector, DEFAULT_DIM};
pub use store::MetadataStore;
pub use vector::{SearchHit, VectorIndex};

use std::path::Path;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::transcribe::Chunk;

pub const INDEX_FILE: &str = "index.bin";
pub const CHUNKS_FILE: &str = "chunks.json";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("text has no tokens to embed")]
    NoTokens,
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider unreachable after {attempts} attempt(s): {detail}")]
    ProviderUnreachable { attempts: u32, detail: String },
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error("chunk id {0} already present")]
    DuplicateId(u64),
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error("index and metadata disagree: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

/// Vector index and metadata store kept in step: both hold the same ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticIndex {
    pub vectors: VectorIndex,
    pub store: MetadataStore,
}

impl SemanticIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            vectors: VectorIndex::new(dim),
            store: MetadataStore::new(),
        }
    }

    /// Embeds and stores a batch of chunks; on error nothing is added.
    pub fn add_chunks(&mut self, chunks: Vec<Chunk>, embedder: &Embedder) -> Result<()> {
        let vectors = chunks.iter().map(|c| embedder.embed(&c.text)).collect::<Result<Vec<_>>>()?;
        let ids: Vec<u64> = chunks.iter().map(|c| c.chunk_id).collect();
        let mut store = self.store.clone();
        for c in chunks {
            store.insert(c)?;
        }
        self.vectors.add(&ids, &vectors)?;
        self.store = store;
        Ok(())
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(Chunk, f64)>> {
        self.vectors
            .search(query, k)?
            .into_iter()
            .map(|hit| {
                let chunk = self
                    .store
                    .get(hit.chunk_id)
                    .cloned()
                    .ok_or_else(|| IndexError::Inconsistent(format!("id {} has no metadata", hit.chunk_id)))?;
                Ok((chunk, hit.score))
            })
            .collect()
    }

    /// Writes `index.bin` and `chunks.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.vectors.save(&dir.join(INDEX_FILE))?;
        std::fs::write(dir.join(CHUNKS_FILE), self.store.to_json()?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vectors = VectorIndex::load(&dir.join(INDEX_FILE))?;
        let store = MetadataStore::from_json(&std::fs::read_to_string(dir.join(CHUNKS_FILE))?)?;
        let mut a: Vec<u64> = vectors.ids().to_vec();
        a.sort_unstable();
        let b: Vec<u64> = store.ids().collect();
        if a != b {
            return Err(IndexError::Inconsistent(format!(
                "{} index rows vs {} metadata records",
                a.len(),
                b.len()
            )));
        }
        Ok(Self { vectors, store })
    }
}

/// Readers take cheap snapshots; a writer publishes a whole new index at once.
#[derive(Debug, Default)]
pub struct SharedIndex {
    current: RwLock<Arc<SemanticIndex>>,
}

impl SharedIndex {
    pub fn new(index: SemanticIndex) -> Self {
        Self {
            current: RwLock::new(Arc::new(index)),
        }
    }

    pub fn snapshot(&self) -> Arc<SemanticIndex> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn publish(&self, index: SemanticIndex) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(index);
    }
}

impl Default for SemanticIndex {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}
