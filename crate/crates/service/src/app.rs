use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use beamrecall_core::array::{
    separate_streams_detailed, srp_phat, ArrayError, DoaEstimate, SeparatedStream, StreamPlan,
};
use beamrecall_core::audio::{read_wav_bytes, MultichannelAudio, stft, write_wav, BitDepth};
use beamrecall_core::index::{Embedder, SemanticIndex};
use beamrecall_core::recall::{answer_query, Llm, QueryContext, RecallConfig, RecallResult};
use beamrecall_core::transcribe::{assign_chunks, chunk_segments, Transcriber, TranscriptSegment};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::ServiceConfig;
use crate::error::{ErrorBody, IngestFailure, IngestStage, Result, ServiceError};
use crate::session::{
    auto_label, session_id, write_json_atomic, IngestPlan, IngestSnapshot, Session, SessionManifest, SessionStore,
    StoredBeamformer, StreamEntry, BEAMFORMERS_FILE, DEFAULT_NUM_SOURCES, DOA_FILE, MANIFEST_FILE,
};

/// Body of `POST /sessions/{id}/query`; the CLI builds the same value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub query: String,
    /// Field-by-field overrides of the configured recall defaults.
    #[serde(default)]
    pub config: Map<String, Value>,
}

impl QueryRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            config: Map::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestState {
    Running,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestStatus {
    pub session_id: String,
    pub state: IngestState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub session_id: String,
    /// False when the session already existed.
    pub created: bool,
}

/// Applies `overrides` on top of `defaults`, rejecting unknown keys.
pub fn merge_recall_config(defaults: &RecallConfig, overrides: &Map<String, Value>) -> Result<RecallConfig> {
    let Value::Object(mut base) = serde_json::to_value(defaults).expect("config serializes") else {
        unreachable!("RecallConfig is a struct")
    };
    for (k, v) in overrides {
        if !base.contains_key(k) {
            return Err(ServiceError::BadRequest(format!("unknown config field {k:?}")));
        }
        base.insert(k.clone(), v.clone());
    }
    let merged: RecallConfig =
        serde_json::from_value(Value::Object(base)).map_err(|e| ServiceError::BadRequest(format!("config: {e}")))?;
    merged.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    Ok(merged)
}

/// Configuration, session store and backend clients shared by the API and
/// the CLI.
pub struct App {
    pub config: ServiceConfig,
    pub store: SessionStore,
    embedder: Embedder,
    llm: Llm,
    transcriber: Transcriber,
    statuses: Mutex<HashMap<String, IngestStatus>>,
}

impl std::fmt::Debug for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("App").field("root", &self.store.root()).finish_non_exhaustive()
    }
}

impl App {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let bad = |e: &dyn std::fmt::Display| ServiceError::BadConfig(e.to_string());
        Ok(Self {
            store: SessionStore::new(&config.sessions_root),
            embedder: Embedder::new(config.embedding.clone()).map_err(|e| bad(&e))?,
            llm: Llm::new(config.llm.clone()).map_err(|e| bad(&e))?,
            transcriber: Transcriber::new(config.asr.clone()).map_err(|e| bad(&e))?,
            statuses: Mutex::new(HashMap::new()),
            config,
        })
    }

    pub fn shared(config: ServiceConfig) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(config)?))
    }

    pub fn snapshot(&self, plan: &IngestPlan) -> IngestSnapshot {
        IngestSnapshot {
            plan: plan.clone(),
            geometry: self.config.geometry.clone(),
            max_sentences: self.config.max_sentences,
            separation: self.config.separation.clone(),
            doa: self.config.doa.clone(),
            asr: self.config.asr.clone(),
            embedding: self.config.embedding.clone(),
        }
    }

    pub fn session_id_for(&self, wav: &[u8], plan: &IngestPlan) -> String {
        session_id(wav, &self.snapshot(plan))
    }

    pub fn open(&self, id: &str) -> Result<Arc<Session>> {
        self.store.open(id)
    }

    pub fn query(&self, id: &str, request: &QueryRequest) -> Result<RecallResult> {
        let config = merge_recall_config(&self.config.recall, &request.config)?;
        let session = self.open(id)?;
        if session.index.vectors.dim() != self.embedder.dim() {
            return Err(ServiceError::BadConfig(format!(
                "session {id} was indexed at dimension {}, the embedding provider gives {}",
                session.index.vectors.dim(),
                self.embedder.dim()
            )));
        }
        let durations = session.stream_durations();
        let ctx = QueryContext {
            index: &session.index,
            embedder: &self.embedder,
            llm: &self.llm,
            stream_durations: &durations,
        };
        Ok(answer_query(&ctx, &request.query, &config)?)
    }

    pub fn status(&self, id: &str) -> Result<IngestStatus> {
        if self.store.exists(id) {
            return Ok(IngestStatus {
                session_id: id.to_string(),
                state: IngestState::Ready,
                error: None,
            });
        }
        self.statuses
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    fn set_status(&self, id: &str, state: IngestState, error: Option<ErrorBody>) {
        self.statuses.lock().unwrap_or_else(|e| e.into_inner()).insert(
            id.to_string(),
            IngestStatus {
                session_id: id.to_string(),
                state,
                error,
            },
        );
    }

    /// Records a background ingest as running; false if one already is.
    pub fn begin_background_ingest(&self, id: &str) -> bool {
        let mut statuses = self.statuses.lock().unwrap_or_else(|e| e.into_inner());
        if statuses.get(id).is_some_and(|s| s.state == IngestState::Running) {
            return false;
        }
        statuses.insert(
            id.to_string(),
            IngestStatus {
                session_id: id.to_string(),
                state: IngestState::Running,
                error: None,
            },
        );
        true
    }

    /// Ingest that records its outcome for the status endpoint.
    pub fn ingest_tracked(&self, wav: &[u8], plan: &IngestPlan) -> Result<IngestOutcome> {
        let id = self.session_id_for(wav, plan);
        let out = self.ingest(wav, plan);
        match &out {
            Ok(_) => self.set_status(&id, IngestState::Ready, None),
            Err(e) => self.set_status(&id, IngestState::Failed, Some(e.body())),
        }
        out
    }

    /// Decodes an upload and checks its channel count against the array.
    pub fn decode(&self, wav: &[u8]) -> Result<MultichannelAudio> {
        let audio = read_wav_bytes(wav).map_err(|e| ServiceError::ingest(IngestStage::Decode, e))?;
        let mics = self.config.geometry().num_mics();
        if audio.num_channels() != mics {
            return Err(ServiceError::ingest(
                IngestStage::Decode,
                ArrayError::ChannelMismatch {
                    expected: mics,
                    got: audio.num_channels(),
                },
            ));
        }
        Ok(audio)
    }

    /// SRP-PHAT peaks, at most `num_sources` of them; an empty result is an error.
    pub fn estimate_doa(&self, audio: &MultichannelAudio, num_sources: usize) -> Result<DoaEstimate> {
        let at = |e: ArrayError| ServiceError::ingest(IngestStage::Doa, e);
        let tensor = stft(audio, self.config.separation.stft).map_err(|e| at(e.into()))?;
        let mut doa_config = self.config.doa.clone();
        doa_config.max_peaks = num_sources;
        let estimate = srp_phat(&tensor, &self.config.geometry(), &doa_config).map_err(at)?;
        if estimate.peaks.is_empty() {
            return Err(ServiceError::ingest(
                IngestStage::Doa,
                IngestFailure::Other("no direction of arrival found".into()),
            ));
        }
        Ok(estimate)
    }

    /// One MVDR stream per planned direction.
    pub fn beamform(&self, audio: &MultichannelAudio, plan: &[StreamPlan]) -> Result<Vec<SeparatedStream>> {
        separate_streams_detailed(audio, &self.config.geometry(), plan, &self.config.separation)
            .map_err(|e| ServiceError::ingest(IngestStage::Beamform, e))
    }

    /// DOA → beamform → transcribe → chunk → index → persist. Re-ingesting
    /// identical input returns the existing session.
    pub fn ingest(&self, wav: &[u8], plan: &IngestPlan) -> Result<IngestOutcome> {
        plan.validate()?;
        let id = self.session_id_for(wav, plan);
        let existing = || IngestOutcome {
            session_id: id.clone(),
            created: false,
        };
        if self.store.exists(&id) {
            return Ok(existing());
        }
        let _lock = self.store.lock_ingest(&id)?;
        if self.store.exists(&id) {
            return Ok(existing());
        }
        tracing::info!(session = %id, "ingest started");

        let audio = self.decode(wav)?;

        let (stream_plan, doa) = if plan.auto_doa {
            let estimate = self.estimate_doa(&audio, plan.num_sources.unwrap_or(DEFAULT_NUM_SOURCES))?;
            let plan: Vec<StreamPlan> = estimate
                .peaks
                .iter()
                .map(|p| StreamPlan::new(auto_label(p.azimuth_deg), p.azimuth_deg))
                .collect();
            (plan, Some(estimate))
        } else {
            (plan.streams.clone(), None)
        };
        let separated = self.beamform(&audio, &stream_plan)?;

        let transcripts: Vec<Vec<TranscriptSegment>> = std::thread::scope(|s| {
            let handles: Vec<_> = separated
                .iter()
                .map(|sep| s.spawn(|| self.transcriber.transcribe(&sep.stream)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("transcription thread panicked"))
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .map_err(|e| ServiceError::ingest(IngestStage::Transcribe, e))?;

        let mut index = SemanticIndex::new(self.embedder.dim());
        let mut next_id = 0;
        let mut chunk_counts = Vec::new();
        for (sep, segments) in separated.iter().zip(&transcripts) {
            let spans = chunk_segments(segments, self.config.max_sentences);
            let chunks = assign_chunks(spans, &sep.stream.label, sep.stream.azimuth_deg, &mut next_id);
            chunk_counts.push(chunks.len());
            index
                .add_chunks(chunks, &self.embedder)
                .map_err(|e| ServiceError::ingest(IngestStage::Index, e))?;
        }

        let staging = self
            .store
            .staging_dir(&id)
            .map_err(|e| ServiceError::ingest(IngestStage::Persist, IngestFailure::Other(e.to_string())))?;
        let staged = Staged {
            plan,
            sample_rate_hz: audio.sample_rate_hz(),
            duration_s: audio.duration_s(),
            separated: &separated,
            transcripts: &transcripts,
            chunk_counts: &chunk_counts,
            index: &index,
            doa: doa.as_ref(),
        };
        let persisted = self.persist(&staging, &id, &staged);
        let committed = persisted.and_then(|()| {
            self.store
                .commit(&staging, &id)
                .map_err(|e| ServiceError::ingest(IngestStage::Persist, IngestFailure::Other(e.to_string())))
        });
        match committed {
            Ok(created) => {
                tracing::info!(session = %id, chunks = index.store.len(), "ingest committed");
                Ok(IngestOutcome { session_id: id, created })
            }
            Err(e) => {
                let _ = fs::remove_dir_all(&staging);
                Err(e)
            }
        }
    }

    fn persist(&self, dir: &Path, id: &str, staged: &Staged<'_>) -> Result<()> {
        let Staged {
            plan,
            separated,
            transcripts,
            chunk_counts,
            index,
            doa,
            ..
        } = *staged;
        let io = |e: std::io::Error| ServiceError::ingest(IngestStage::Persist, e);
        let other = |e: &dyn std::fmt::Display| ServiceError::ingest(IngestStage::Persist, IngestFailure::Other(e.to_string()));
        fs::create_dir_all(dir.join("streams")).map_err(io)?;
        fs::create_dir_all(dir.join("transcripts")).map_err(io)?;

        let mut streams = Vec::new();
        for ((sep, segments), &chunk_count) in separated.iter().zip(transcripts).zip(chunk_counts) {
            let s = &sep.stream;
            let wav = format!("streams/{}.wav", s.label);
            let transcript = format!("transcripts/{}.json", s.label);
            write_wav(&s.to_audio(), dir.join(&wav), BitDepth::Float32).map_err(|e| other(&e))?;
            write_json_atomic(&dir.join(&transcript), segments)?;
            streams.push(StreamEntry {
                label: s.label.clone(),
                azimuth_deg: s.azimuth_deg,
                wav,
                transcript,
                duration_s: s.duration_s(),
                chunk_count,
            });
        }
        index.save(dir).map_err(|e| other(&e))?;
        let beams: Vec<StoredBeamformer> = separated
            .iter()
            .map(|s| StoredBeamformer {
                label: s.stream.label.clone(),
                weights: s.weights.clone(),
            })
            .collect();
        write_json_atomic(&dir.join(BEAMFORMERS_FILE), &beams)?;
        if let Some(doa) = doa {
            write_json_atomic(&dir.join(DOA_FILE), doa)?;
        }
        let manifest = SessionManifest {
            session_id: id.to_string(),
            created_at: Utc::now(),
            sample_rate_hz: staged.sample_rate_hz,
            geometry: self.config.geometry.clone(),
            duration_s: staged.duration_s,
            streams,
            chunk_count: index.store.len(),
            config: self.snapshot(plan),
        };
        write_json_atomic(&dir.join(MANIFEST_FILE), &manifest)
    }
}

/// Everything an ingest produced, ready to be written out.
struct Staged<'a> {
    plan: &'a IngestPlan,
    sample_rate_hz: u32,
    duration_s: f64,
    separated: &'a [SeparatedStream],
    transcripts: &'a [Vec<TranscriptSegment>],
    chunk_counts: &'a [usize],
    index: &'a SemanticIndex,
    doa: Option<&'a DoaEstimate>,
}
