//! Anechoic scene simulation and the separation quality metrics.

mod metrics;
mod sim;
mod stoi;
mod synth;

pub use metrics::{si_sdr, MetricReport, StreamMetrics, SI_SDR_CAP_DB};
pub use sim::{fractional_delay, simulate_scene, SceneSource, SceneSpec, SimulatedScene, MAX_DELAY_S};
pub use stoi::{stoi, STOI_INPUT_RATE_HZ};
pub use synth::synth_speech;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{ArrayGeometry, DirectionalStream, StreamPlan, DEFAULT_SPEED_OF_SOUND};
use crate::audio::{read_wav, AudioError};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene has no sources")]
    NoSources,
    #[error("source sample rate {got} Hz differs from the scene rate {expected} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("delay {tau_s}s exceeds the 10 ms propagation bound")]
    DelayTooLarge { tau_s: f64 },
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("reference has {reference} samples, estimate has {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("not enough active speech for a 384 ms analysis segment")]
    TooShort,
    #[error("STOI needs 16 kHz input, got {0} Hz")]
    UnsupportedRate(u32),
    #[error("unknown geometry preset {0:?}")]
    UnknownGeometry(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = SceneError> = std::result::Result<T, E>;

/// Procedurally generated speech-like source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_f0")]
    pub f0_hz: f64,
}

fn default_f0() -> f64 {
    140.0
}

/// One source entry of a scene document: a mono WAV or a synthetic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSourceDoc {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
    pub azimuth_deg: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

/// JSON scene description accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    #[serde(default = "default_geometry")]
    pub geometry: String,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: u32,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
    pub sources: Vec<SceneSourceDoc>,
}

fn default_geometry() -> String {
    "uma8".into()
}

fn default_rate() -> u32 {
    16_000
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl SceneDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SceneError::Invalid(e.to_string()))
    }

    pub fn labels(&self) -> Vec<String> {
        self.sources
            .iter()
            .enumerate()
            .map(|(i, s)| s.label.clone().unwrap_or_else(|| format!("source{i}")))
            .collect()
    }

    pub fn plan(&self) -> Vec<StreamPlan> {
        self.labels()
            .into_iter()
            .zip(&self.sources)
            .map(|(label, s)| StreamPlan::new(label, s.azimuth_deg))
            .collect()
    }

    /// Loads WAV sources (relative to `base_dir`) and renders synthetic ones.
    pub fn resolve(&self, base_dir: &Path) -> Result<SceneSpec> {
        let geometry = ArrayGeometry::preset(&self.geometry)
            .ok_or_else(|| SceneError::UnknownGeometry(self.geometry.clone()))?;
        let mut spec = SceneSpec::new(geometry, self.sample_rate_hz);
        spec.noise_snr_db = self.snr_db;
        spec.seed = self.seed;
        spec.speed_of_sound = self.speed_of_sound;
        for (i, src) in self.sources.iter().enumerate() {
            let (signal, rate) = match (&src.path, &src.synthetic) {
                (Some(path), None) => {
                    let audio = read_wav(base_dir.join(path))?;
                    if audio.num_channels() != 1 {
                        return Err(SceneError::Invalid(format!(
                            "source {i} ({path}) has {} channels; sources must be mono",
                            audio.num_channels()
                        )));
                    }
                    let rate = audio.sample_rate_hz();
                    (audio.into_channels().remove(0), rate)
                }
                (None, Some(syn)) => (
                    synth_speech(syn.seed, syn.duration_s, self.sample_rate_hz, syn.f0_hz),
                    self.sample_rate_hz,
                ),
                _ => {
                    return Err(SceneError::Invalid(format!(
                        "source {i} needs exactly one of `path` or `synthetic`"
                    )))
                }
            };
            spec.sources.push(SceneSource {
                azimuth_deg: src.azimuth_deg,
                signal,
                gain: src.gain,
                sample_rate_hz: rate,
            });
        }
        Ok(spec)
    }
}

/// Scores each separated stream against its clean reference, with the
/// scene's reference-mic channel as the unprocessed baseline.
pub fn evaluate_streams(scene: &SimulatedScene, streams: &[DirectionalStream]) -> Result<MetricReport> {
    if streams.len() != scene.references.len() {
        return Err(SceneError::Invalid(format!(
            "{} streams for {} sources",
            streams.len(),
            scene.references.len()
        )));
    }
    let before = scene.mixture.channel(scene.reference_mic);
    let rate = scene.mixture.sample_rate_hz();
    let streams = streams
        .iter()
        .zip(&scene.references)
        .map(|(s, reference)| {
            Ok(StreamMetrics {
                label: s.label.clone(),
                azimuth_deg: s.azimuth_deg,
                stoi_before: stoi(reference, before, rate)?,
                stoi_after: stoi(reference, &s.samples, rate)?,
                si_sdr_before_db: si_sdr(reference, before)?,
                si_sdr_after_db: si_sdr(reference, &s.samples)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        before_channel: scene.reference_mic,
        streams,
    })
}
