//! Speech recognition over directional streams, sentence splitting and
//! chunking into ~3-sentence units.

mod chunk;
mod sentences;

pub use chunk::{assign_chunks, chunk_segments, Chunk, ChunkSpan, DEFAULT_MAX_SENTENCES};
pub use sentences::{is_terminated, split_sentences};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use reqwest::blocking::multipart::{Form, Part};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::DirectionalStream;
use crate::audio::{write_wav_bytes, AudioError, BitDepth};
use crate::remote::{Endpoint, InFlightLimit, RemoteClient, RemoteError};

#[derive(Debug, Error)]
pub enum TranscribeError {
    #[error("ASR backend unreachable after {attempts} attempt(s): {detail}")]
    BackendUnreachable { attempts: u32, detail: String },
    #[error("malformed ASR response: {0}")]
    MalformedResponse(String),
    #[error("no transcript fixture at {0}")]
    FixtureMissing(PathBuf),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

impl From<RemoteError> for TranscribeError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Unreachable { attempts, detail } => Self::BackendUnreachable { attempts, detail },
            RemoteError::Malformed(m) => Self::MalformedResponse(m),
        }
    }
}

pub type Result<T, E = TranscribeError> = std::result::Result<T, E>;

/// Timestamped text, seconds from session start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub text: String,
    #[serde(rename = "start")]
    pub start_s: f64,
    #[serde(rename = "end")]
    pub end_s: f64,
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AsrBackend {
    /// `<dir>/<direction label>.json` holding `[{text, start, end}, ...]`.
    FixtureFile { dir: PathBuf },
    /// Multipart upload of the stream WAV; the response carries a `segments` array.
    RemoteHttp {
        #[serde(flatten)]
        endpoint: Endpoint,
        #[serde(default)]
        model: Option<String>,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Debug, Deserialize)]
struct SegmentsEnvelope {
    segments: Vec<TranscriptSegment>,
}

/// A configured backend, shareable across threads transcribing different
/// streams.
#[derive(Debug, Clone)]
pub struct Transcriber {
    backend: AsrBackend,
    client: Option<RemoteClient>,
    limit: Arc<InFlightLimit>,
}

impl Transcriber {
    pub fn new(backend: AsrBackend) -> Result<Self> {
        let (client, max) = match &backend {
            AsrBackend::FixtureFile { .. } => (None, 1),
            AsrBackend::RemoteHttp {
                endpoint, max_in_flight, ..
            } => (Some(RemoteClient::new(endpoint.clone())?), *max_in_flight),
        };
        Ok(Self {
            backend,
            client,
            limit: Arc::new(InFlightLimit::new(max)),
        })
    }

    pub fn backend(&self) -> &AsrBackend {
        &self.backend
    }

    /// Segments of one stream, sorted by start time.
    pub fn transcribe(&self, stream: &DirectionalStream) -> Result<Vec<TranscriptSegment>> {
        let segments = match (&self.backend, &self.client) {
            (AsrBackend::FixtureFile { dir }, _) => load_fixture(&dir.join(format!("{}.json", stream.label)))?,
            (AsrBackend::RemoteHttp { model, .. }, Some(client)) => {
                let (wav, _) = write_wav_bytes(&stream.to_audio(), BitDepth::Int16)?;
                let _permit = self.limit.acquire();
                let resp = client.send(|c, url| {
                    let part = Part::bytes(wav.clone())
                        .file_name(format!("{}.wav", stream.label))
                        .mime_str("audio/wav")
                        .expect("static mime type");
                    let mut form = Form::new()
                        .part("file", part)
                        .text("response_format", "verbose_json");
                    if let Some(m) = model {
                        form = form.text("model", m.clone());
                    }
                    c.post(url).multipart(form)
                })?;
                let body = resp.text().map_err(|e| TranscribeError::MalformedResponse(e.to_string()))?;
                serde_json::from_str::<SegmentsEnvelope>(&body)
                    .map_err(|e| TranscribeError::MalformedResponse(e.to_string()))?
                    .segments
            }
            (AsrBackend::RemoteHttp { .. }, None) => unreachable!("remote backend always has a client"),
        };
        normalize_segments(segments)
    }
}

/// Convenience wrapper building a one-off [`Transcriber`].
pub fn transcribe_stream(stream: &DirectionalStream, backend: &AsrBackend) -> Result<Vec<TranscriptSegment>> {
    Transcriber::new(backend.clone())?.transcribe(stream)
}

pub fn load_fixture(path: &Path) -> Result<Vec<TranscriptSegment>> {
    let text = std::fs::read_to_string(path).map_err(|_| TranscribeError::FixtureMissing(path.to_path_buf()))?;
    let segments = serde_json::from_str(&text)
        .map_err(|e| TranscribeError::MalformedResponse(format!("{}: {e}", path.display())))?;
    normalize_segments(segments)
}

fn normalize_segments(mut segments: Vec<TranscriptSegment>) -> Result<Vec<TranscriptSegment>> {
    for s in &mut segments {
        s.text = s.text.trim().to_string();
        if s.text.is_empty() || !s.start_s.is_finite() || !s.end_s.is_finite() || s.start_s >= s.end_s {
            return Err(TranscribeError::MalformedResponse(format!(
                "invalid segment {:?} [{}, {}]",
                s.text, s.start_s, s.end_s
            )));
        }
    }
    segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
    Ok(segments)
}
