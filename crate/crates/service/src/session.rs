use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use beamrecall_core::array::{beam_pattern, ArrayGeometry, BeamformerWeights, DoaConfig, SeparationConfig, StreamPlan};
use beamrecall_core::audio::{read_wav, write_wav_bytes, BitDepth};
use beamrecall_core::index::{EmbeddingProvider, SemanticIndex};
use beamrecall_core::transcribe::AsrBackend;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BEAMFORMERS_FILE: &str = "beamformers.json";
pub const DOA_FILE: &str = "doa.json";
pub const SESSION_ID_LEN: usize = 12;

/// How to pick look directions: explicit streams, or DOA peaks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestPlan {
    #[serde(default)]
    pub streams: Vec<StreamPlan>,
    #[serde(default)]
    pub auto_doa: bool,
    /// Number of DOA peaks to keep when `auto_doa` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_sources: Option<usize>,
}

pub const DEFAULT_NUM_SOURCES: usize = 2;

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label.len() <= 64
        && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl IngestPlan {
    pub fn explicit(streams: Vec<StreamPlan>) -> Self {
        Self {
            streams,
            ..Self::default()
        }
    }

    pub fn auto(num_sources: usize) -> Self {
        Self {
            auto_doa: true,
            num_sources: Some(num_sources),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text).map_err(|e| ServiceError::BadRequest(format!("plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ServiceError::BadRequest(m.to_string()));
        match (self.auto_doa, self.streams.is_empty()) {
            (true, false) => return bad("give either streams or auto_doa, not both"),
            (false, true) => return bad("give at least one stream or set auto_doa"),
            _ => {}
        }
        if self.auto_doa && self.num_sources == Some(0) {
            return bad("num_sources must be at least 1");
        }
        if !self.auto_doa && self.num_sources.is_some() {
            return bad("num_sources only applies with auto_doa");
        }
        if let Some(s) = self.streams.iter().find(|s| !valid_label(&s.label)) {
            return Err(ServiceError::BadRequest(format!(
                "label {:?} must be 1-64 characters of [A-Za-z0-9_-]",
                s.label
            )));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.streams.iter().find(|s| !seen.insert(s.label.as_str())) {
            return Err(ServiceError::BadRequest(format!("duplicate label {:?}", s.label)));
        }
        Ok(())
    }
}

/// Label used for a DOA-derived stream, e.g. `az045`.
pub fn auto_label(azimuth_deg: f64) -> String {
    format!("az{:03}", (azimuth_deg.round() as i64).rem_euclid(360))
}

/// The ingest inputs that determine a session's content.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSnapshot {
    pub plan: IngestPlan,
    pub geometry: String,
    pub max_sentences: usize,
    pub separation: SeparationConfig,
    pub doa: DoaConfig,
    pub asr: AsrBackend,
    pub embedding: EmbeddingProvider,
}

/// First 12 hex chars of SHA-256 over the WAV bytes and the snapshot JSON.
pub fn session_id(wav: &[u8], snapshot: &IngestSnapshot) -> String {
    let mut h = Sha256::new();
    h.update(wav);
    h.update([0u8]);
    h.update(serde_json::to_vec(snapshot).expect("snapshot serializes"));
    let mut id = hex::encode(h.finalize());
    id.truncate(SESSION_ID_LEN);
    id
}

pub fn is_session_id(s: &str) -> bool {
    s.len() == SESSION_ID_LEN && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub label: String,
    pub azimuth_deg: f64,
    /// Relative to the session directory.
    pub wav: String,
    pub transcript: String,
    pub duration_s: f64,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub sample_rate_hz: u32,
    pub geometry: String,
    pub duration_s: f64,
    pub streams: Vec<StreamEntry>,
    pub chunk_count: usize,
    pub config: IngestSnapshot,
}

impl SessionManifest {
    pub fn stream(&self, label: &str) -> Option<&StreamEntry> {
        self.streams.iter().find(|s| s.label == label)
    }

    fn check(&self, dir_name: &str) -> std::result::Result<(), String> {
        if self.session_id != dir_name {
            return Err(format!("manifest id {} in directory {dir_name}", self.session_id));
        }
        let mut seen = HashSet::new();
        for s in &self.streams {
            if !seen.insert(&s.label) {
                return Err(format!("duplicate label {:?}", s.label));
            }
            for p in [&s.wav, &s.transcript] {
                let path = Path::new(p);
                if path.is_absolute() || path.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
                    return Err(format!("path {p:?} leaves the session directory"));
                }
            }
        }
        Ok(())
    }
}

/// Beamformer weights as stored in `beamformers.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredBeamformer {
    pub label: String,
    pub weights: BeamformerWeights,
}

/// A committed session, loaded for querying.
#[derive(Debug)]
pub struct Session {
    pub dir: PathBuf,
    pub manifest: SessionManifest,
    pub index: SemanticIndex,
}

impl Session {
    pub fn load(dir: &Path) -> Result<Self> {
        let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let corrupt = |detail: String| ServiceError::CorruptSession { id: id.clone(), detail };
        let manifest = read_manifest(dir).map_err(|e| corrupt(e.to_string()))?;
        manifest.check(&id).map_err(corrupt)?;
        let index = SemanticIndex::load(dir).map_err(|e| corrupt(e.to_string()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            index,
        })
    }

    pub fn id(&self) -> &str {
        &self.manifest.session_id
    }

    pub fn stream_durations(&self) -> BTreeMap<String, f64> {
        self.manifest
            .streams
            .iter()
            .map(|s| (s.label.clone(), s.duration_s))
            .collect()
    }

    /// 16-bit mono WAV of `[start_s, end_s)` from one beamformed stream.
    pub fn audio_slice(&self, direction: &str, start_s: f64, end_s: f64) -> Result<Vec<u8>> {
        let entry = self
            .manifest
            .stream(direction)
            .ok_or_else(|| ServiceError::UnknownDirection(direction.to_string()))?;
        let audio = read_wav(self.dir.join(&entry.wav))?;
        let slice = audio.slice(start_s, end_s)?;
        Ok(write_wav_bytes(&slice, BitDepth::Int16)?.0)
    }

    pub fn beamformers(&self) -> Result<Vec<StoredBeamformer>> {
        let text = fs::read_to_string(self.dir.join(BEAMFORMERS_FILE))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::CorruptSession {
            id: self.id().to_string(),
            detail: e.to_string(),
        })
    }

    /// Beam pattern CSV at `freq_hz`, one column per stream (or just `direction`).
    pub fn beampattern_csv(&self, freq_hz: f64, direction: Option<&str>, resolution_deg: f64) -> Result<String> {
        let mut beams = self.beamformers()?;
        if let Some(d) = direction {
            beams.retain(|b| b.label == d);
            if beams.is_empty() {
                return Err(ServiceError::UnknownDirection(d.to_string()));
            }
        }
        let geom = ArrayGeometry::preset(&self.manifest.geometry).ok_or_else(|| ServiceError::CorruptSession {
            id: self.id().to_string(),
            detail: format!("unknown geometry {:?}", self.manifest.geometry),
        })?;
        pattern_csv(&beams, &geom, freq_hz, resolution_deg, self.manifest.config.separation.speed_of_sound)
    }
}

/// CSV with an `azimuth_deg` column and one `|wᴴd|` column per beam.
pub fn pattern_csv(
    beams: &[StoredBeamformer],
    geom: &ArrayGeometry,
    freq_hz: f64,
    resolution_deg: f64,
    speed_of_sound: f64,
) -> Result<String> {
    if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
        return Err(ServiceError::BadRequest("resolution must be in (0, 90] degrees".into()));
    }
    if !(freq_hz.is_finite() && freq_hz >= 0.0) {
        return Err(ServiceError::BadRequest("freq must be a non-negative number".into()));
    }
    let columns = beams
        .iter()
        .map(|b| beam_pattern(&b.weights, geom, freq_hz, resolution_deg, speed_of_sound))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(ServiceError::Beampattern)?;
    let mut out = String::from("azimuth_deg");
    for b in beams {
        out.push(',');
        out.push_str(&b.label);
    }
    out.push('\n');
    let rows = columns.first().map_or(0, Vec::len);
    for i in 0..rows {
        out.push_str(&columns[0][i].0.to_string());
        for c in &columns {
            out.push_str(&format!(",{}", c[i].1));
        }
        out.push('\n');
    }
    Ok(out)
}

fn read_manifest(dir: &Path) -> std::result::Result<SessionManifest, Box<dyn std::error::Error>> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
}

/// Sessions under one root directory. Only fully committed sessions (those
/// with a manifest, renamed into place) are visible.
#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    cache: RwLock<HashMap<String, Arc<Session>>>,
    ingesting: Mutex<HashSet<String>>,
}

/// Held while a session id is being ingested.
#[derive(Debug)]
pub struct IngestLock<'a> {
    store: &'a SessionStore,
    id: String,
}

impl Drop for IngestLock<'_> {
    fn drop(&mut self) {
        self.store
            .ingesting
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&self.id);
    }
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cache: RwLock::new(HashMap::new()),
            ingesting: Mutex::new(HashSet::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        is_session_id(id) && self.dir(id).join(MANIFEST_FILE).is_file()
    }

    pub fn is_ingesting(&self, id: &str) -> bool {
        self.ingesting.lock().unwrap_or_else(|e| e.into_inner()).contains(id)
    }

    pub fn lock_ingest(&self, id: &str) -> Result<IngestLock<'_>> {
        if !self.ingesting.lock().unwrap_or_else(|e| e.into_inner()).insert(id.to_string()) {
            return Err(ServiceError::Busy(id.to_string()));
        }
        Ok(IngestLock {
            store: self,
            id: id.to_string(),
        })
    }

    /// Manifests of every committed session, oldest first.
    pub fn list(&self) -> Result<Vec<SessionManifest>> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !is_session_id(&name) || !entry.path().join(MANIFEST_FILE).is_file() {
                continue;
            }
            match read_manifest(&entry.path()) {
                Ok(m) => out.push(m),
                Err(e) => tracing::warn!(session = %name, error = %e, "skipping unreadable manifest"),
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.session_id.cmp(&b.session_id)));
        Ok(out)
    }

    pub fn open(&self, id: &str) -> Result<Arc<Session>> {
        if let Some(s) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(id) {
            return Ok(s.clone());
        }
        if !self.exists(id) {
            return Err(ServiceError::SessionNotFound(id.to_string()));
        }
        let session = Arc::new(Session::load(&self.dir(id))?);
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.to_string(), session.clone());
        Ok(session)
    }

    /// A fresh hidden staging directory under the root.
    pub fn staging_dir(&self, id: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos());
        let dir = self.root.join(format!(".staging-{id}-{}-{nanos}", std::process::id()));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Moves a staged session into place. Returns false when another
    /// writer committed the same id first; the staging dir is removed then.
    pub fn commit(&self, staging: &Path, id: &str) -> Result<bool> {
        let target = self.dir(id);
        match fs::rename(staging, &target) {
            Ok(()) => Ok(true),
            Err(_) if target.join(MANIFEST_FILE).is_file() => {
                fs::remove_dir_all(staging)?;
                Ok(false)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Writes `value` as pretty JSON via a temporary file and a rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.part");
    fs::write(&tmp, serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
