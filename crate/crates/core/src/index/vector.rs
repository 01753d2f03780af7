use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use super::embed::{dot, EmbeddingVector};
use super::{IndexError, Result};

const MAGIC: &[u8; 4] = b"BFLM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

/// Exact cosine search over unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    rows: Vec<f32>,
    ids: Vec<u64>,
    id_set: HashSet<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub chunk_id: u64,
    pub score: f64,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            ids: Vec::new(),
            id_set: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.id_set.contains(&id)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Appends a batch; nothing is added if any id is already present or
    /// repeated within the batch.
    pub fn add(&mut self, ids: &[u64], vectors: &[EmbeddingVector]) -> Result<()> {
        if ids.len() != vectors.len() {
            return Err(IndexError::InvalidVector(format!("{} ids for {} vectors", ids.len(), vectors.len())));
        }
        let mut batch = HashSet::new();
        for (&id, v) in ids.iter().zip(vectors) {
            if self.id_set.contains(&id) || !batch.insert(id) {
                return Err(IndexError::DuplicateId(id));
            }
            if v.dim() != self.dim {
                return Err(IndexError::DimensionMismatch {
                    expected: self.dim,
                    got: v.dim(),
                });
            }
        }
        for (&id, v) in ids.iter().zip(vectors) {
            self.rows.extend_from_slice(v.values());
            self.ids.push(id);
            self.id_set.insert(id);
        }
        Ok(())
    }

    /// Top `k` rows by cosine, ties broken by ascending id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut hits: Vec<SearchHit> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, &chunk_id)| SearchHit {
                chunk_id,
                score: dot(self.row(i), query.values()),
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.chunk_id.cmp(&b.chunk_id)));
        hits.truncate(k);
        Ok(hits)
    }

    pub fn vector(&self, id: u64) -> Option<EmbeddingVector> {
        let i = self.ids.iter().position(|&x| x == id)?;
        Some(EmbeddingVector::from_raw(self.row(i).to_vec()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows.len() * 4 + self.ids.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| IndexError::CorruptFile(m.to_string());
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let dim = u32_at(16) as usize;
        let expected = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(dim * 4 + 8))
            .and_then(|body| body.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(corrupt(&format!("length {} does not match {n} rows of dimension {dim}", bytes.len())));
        }
        let n = n as usize;
        let rows_end = HEADER_LEN + n * dim * 4;
        let rows = bytes[HEADER_LEN..rows_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let ids: Vec<u64> = bytes[rows_end..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let id_set: HashSet<u64> = ids.iter().copied().collect();
        if id_set.len() != ids.len() {
            return Err(corrupt("duplicate ids"));
        }
        Ok(Self { dim, rows, ids, id_set })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
