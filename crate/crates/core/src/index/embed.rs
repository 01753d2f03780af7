use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{IndexError, Result};
use crate::remote::{Endpoint, RemoteClient, RemoteError};

pub const DEFAULT_DIM: usize = 384;

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values`; zero or non-finite input is rejected.
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::InvalidVector("non-finite component".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(IndexError::InvalidVector("zero vector".into()));
        }
        Ok(Self(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    /// Wraps stored values without renormalizing.
    pub(crate) fn from_raw(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let tok = tok.to_lowercase();
        if out.last() != Some(&tok) {
            out.push(tok);
        }
    }
    out
}

/// Signed feature hashing of lowercase unigrams and bigrams. Immediate
/// repeats of a token are collapsed first, so "dogs dogs" embeds like "dogs".
pub fn hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(IndexError::InvalidVector("dimension must be positive".into()));
    }
    let toks = tokens(text);
    if toks.is_empty() {
        return Err(IndexError::NoTokens);
    }
    let mut acc = vec![0.0f64; dim];
    let mut add = |feature: &str, weight: f64| {
        let h = fnv1a(feature.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % dim as u64) as usize] += sign * weight;
    };
    for t in &toks {
        add(&format!("u:{t}"), 1.0);
    }
    for pair in toks.windows(2) {
        add(&format!("b:{} {}", pair[0], pair[1]), 0.5);
    }
    EmbeddingVector::new(&acc).or_else(|_| {
        // every feature cancelled out; fall back to the first unigram alone
        let mut v = vec![0.0; dim];
        let h = fnv1a(format!("u:{}", toks[0]).as_bytes());
        v[(h % dim as u64) as usize] = 1.0;
        EmbeddingVector::new(&v)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbeddingProvider {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// POST `{input: [text], model}`; accepts `data[].embedding` or `embeddings`.
    RemoteHttp {
        #[serde(flatten)]
        endpoint: Endpoint,
        #[serde(default)]
        model: Option<String>,
        #[serde(default = "default_dim")]
        dim: usize,
    },
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        Self::Hash { dim: DEFAULT_DIM }
    }
}

/// An [`EmbeddingProvider`] ready for use.
#[derive(Debug, Clone)]
pub struct Embedder {
    provider: EmbeddingProvider,
    client: Option<RemoteClient>,
}

impl Embedder {
    pub fn new(provider: EmbeddingProvider) -> Result<Self> {
        let client = match &provider {
            EmbeddingProvider::Hash { .. } => None,
            EmbeddingProvider::RemoteHttp { endpoint, .. } => {
                Some(RemoteClient::new(endpoint.clone()).map_err(remote_error)?)
            }
        };
        Ok(Self { provider, client })
    }

    pub fn hash(dim: usize) -> Self {
        Self {
            provider: EmbeddingProvider::Hash { dim },
            client: None,
        }
    }

    pub fn dim(&self) -> usize {
        match self.provider {
            EmbeddingProvider::Hash { dim } | EmbeddingProvider::RemoteHttp { dim, .. } => dim,
        }
    }

    pub fn provider(&self) -> &EmbeddingProvider {
        &self.provider
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(IndexError::NoTokens);
        }
        match (&self.provider, &self.client) {
            (EmbeddingProvider::Hash { dim }, _) => hash_embed(text, *dim),
            (EmbeddingProvider::RemoteHttp { model, dim, .. }, Some(client)) => {
                let mut body = json!({ "input": [text] });
                if let Some(m) = model {
                    body["model"] = json!(m);
                }
                let resp = client.post_json(&body).map_err(remote_error)?;
                let values = parse_embedding(&resp)?;
                if values.len() != *dim {
                    return Err(IndexError::DimensionMismatch {
                        expected: *dim,
                        got: values.len(),
                    });
                }
                EmbeddingVector::new(&values)
            }
            (EmbeddingProvider::RemoteHttp { .. }, None) => unreachable!("remote provider always has a client"),
        }
    }
}

fn remote_error(e: RemoteError) -> IndexError {
    match e {
        RemoteError::Unreachable { attempts, detail } => IndexError::ProviderUnreachable { attempts, detail },
        RemoteError::Malformed(m) => IndexError::MalformedResponse(m),
    }
}

fn parse_embedding(resp: &Value) -> Result<Vec<f64>> {
    let vector = resp
        .pointer("/data/0/embedding")
        .or_else(|| resp.pointer("/embeddings/0"))
        .or_else(|| resp.get("embedding"))
        .and_then(Value::as_array)
        .ok_or_else(|| IndexError::MalformedResponse("no embedding vector in response".into()))?;
    vector
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| IndexError::MalformedResponse("non-numeric component".into())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &str, b: &str) -> f64 {
        hash_embed(a, DEFAULT_DIM).unwrap().dot(&hash_embed(b, DEFAULT_DIM).unwrap())
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let v = hash_embed("Dogs are great", DEFAULT_DIM).unwrap();
        let norm: f64 = v.values().iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(v, hash_embed("Dogs are great", DEFAULT_DIM).unwrap());
    }

    #[test]
    fn repeated_tokens_collapse() {
        assert!((cos("dogs dogs", "dogs") - 1.0).abs() < 1e-6);
        assert!((cos("dogs are great", "DOGS, are great!") - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_vocabularies_are_far_apart() {
        assert!(cos("dogs bark loudly", "federal interest rates") < 0.3);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(matches!(hash_embed("  ,;  ", 8), Err(IndexError::NoTokens)));
        assert!(matches!(Embedder::hash(8).embed(""), Err(IndexError::NoTokens)));
    }

    #[test]
    fn parses_both_response_shapes() {
        let a = json!({"data":[{"embedding":[1.0, 0.0]}]});
        let b = json!({"embeddings":[[0.0, 2.0]]});
        assert_eq!(parse_embedding(&a).unwrap(), vec![1.0, 0.0]);
        assert_eq!(parse_embedding(&b).unwrap(), vec![0.0, 2.0]);
        assert!(parse_embedding(&json!({"x":1})).is_err());
    }
}
