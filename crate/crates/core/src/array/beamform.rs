use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::covariance::{estimate_covariance, DEFAULT_LOADING};
use super::geometry::ArrayGeometry;
use super::mvdr::{mvdr_weights, response, BeamformerWeights};
use super::steering::{angular_distance, normalize_azimuth, steering_per_bin, steering_vector, DEFAULT_SPEED_OF_SOUND};
use super::{ArrayError, Result};
use crate::audio::{istft, stft, MultichannelAudio, StftConfig, StftTensor};

/// One separated conversation: beamformed mono audio plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalStream {
    pub label: String,
    pub azimuth_deg: f64,
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl DirectionalStream {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn to_audio(&self) -> MultichannelAudio {
        MultichannelAudio::mono(self.samples.clone(), self.sample_rate_hz)
            .expect("stream sample rate is positive")
    }
}

/// A labeled look direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub label: String,
    pub azimuth_deg: f64,
}

impl StreamPlan {
    pub fn new(label: impl Into<String>, azimuth_deg: f64) -> Self {
        Self {
            label: label.into(),
            azimuth_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationConfig {
    pub stft: StftConfig,
    pub loading_factor: f64,
    pub speed_of_sound: f64,
    pub min_separation_deg: f64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            loading_factor: DEFAULT_LOADING,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            min_separation_deg: 20.0,
        }
    }
}

/// A stream together with the weights that produced it.
#[derive(Debug, Clone)]
pub struct SeparatedStream {
    pub stream: DirectionalStream,
    pub weights: BeamformerWeights,
}

/// `Y(f, b) = wᴴ_b X(f, b)`, resynthesized to the input length.
pub fn apply_beamformer(stft: &StftTensor, weights: &BeamformerWeights) -> Result<Vec<f64>> {
    let (m, frames, bins) = stft.data().dim();
    if weights.num_bins() != bins {
        return Err(ArrayError::DimensionMismatch {
            expected: bins,
            got: weights.num_bins(),
        });
    }
    if let Some(bad) = weights.weights_per_bin.iter().find(|w| w.len() != m) {
        return Err(ArrayError::DimensionMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    let data = stft.data();
    let mut out = Array2::<Complex64>::zeros((frames, bins));
    for b in 0..bins {
        let w = &weights.weights_per_bin[b];
        for f in 0..frames {
            let mut y = Complex64::default();
            for (ch, wc) in w.iter().enumerate() {
                y += wc.conj() * data[[ch, f, b]];
            }
            out[[f, b]] = y;
        }
    }
    Ok(istft(&stft.mono_like(out)?)?)
}

/// `|wᴴ d(θ)|` over the azimuth grid, evaluated at the center frequency of
/// the bin nearest to `freq_hz`.
pub fn beam_pattern(
    weights: &BeamformerWeights,
    geom: &ArrayGeometry,
    freq_hz: f64,
    grid_resolution_deg: f64,
    speed_of_sound: f64,
) -> Result<Vec<(f64, f64)>> {
    let bin = weights
        .bin_for_frequency(freq_hz)
        .ok_or(ArrayError::BinOutOfRange { freq_hz })?;
    let w = &weights.weights_per_bin[bin];
    if w.len() != geom.num_mics() {
        return Err(ArrayError::DimensionMismatch {
            expected: geom.num_mics(),
            got: w.len(),
        });
    }
    let bin_freq = weights.bin_freqs_hz[bin];
    let steps = (360.0 / grid_resolution_deg).round() as usize;
    Ok((0..steps)
        .map(|i| {
            let az = i as f64 * grid_resolution_deg;
            let d = steering_vector(geom, az, bin_freq, speed_of_sound);
            (az, response(w, &d.elements).norm())
        })
        .collect())
}

pub fn beam_pattern_csv(pattern: &[(f64, f64)]) -> String {
    let mut out = String::from("azimuth_deg,value\n");
    for (az, g) in pattern {
        out.push_str(&format!("{az},{g}\n"));
    }
    out
}

/// Checks labels and look directions before any DSP work.
pub fn validate_plan(plan: &[StreamPlan], min_separation_deg: f64) -> Result<()> {
    if plan.is_empty() {
        return Err(ArrayError::NoAzimuths);
    }
    for (i, a) in plan.iter().enumerate() {
        if a.label.trim().is_empty() {
            return Err(ArrayError::InvalidConfig("stream labels must be non-empty".into()));
        }
        if !a.azimuth_deg.is_finite() {
            return Err(ArrayError::InvalidConfig(format!("azimuth for {} is not finite", a.label)));
        }
        for b in &plan[i + 1..] {
            if a.label == b.label {
                return Err(ArrayError::DuplicateLabel(a.label.clone()));
            }
            let sep = angular_distance(a.azimuth_deg, b.azimuth_deg);
            if sep < min_separation_deg {
                return Err(ArrayError::AzimuthsTooClose {
                    a: a.label.clone(),
                    b: b.label.clone(),
                    separation_deg: sep,
                    min_deg: min_separation_deg,
                });
            }
        }
    }
    Ok(())
}

/// Covariance from the whole recording, one MVDR beam per planned direction.
pub fn separate_streams_detailed(
    audio: &MultichannelAudio,
    geom: &ArrayGeometry,
    plan: &[StreamPlan],
    config: &SeparationConfig,
) -> Result<Vec<SeparatedStream>> {
    validate_plan(plan, config.min_separation_deg)?;
    if audio.num_channels() != geom.num_mics() {
        return Err(ArrayError::ChannelMismatch {
            expected: geom.num_mics(),
            got: audio.num_channels(),
        });
    }
    let tensor = stft(audio, config.stft)?;
    let covariances = estimate_covariance(&tensor, config.loading_factor)?;
    let bin_hz = tensor.bin_frequency(1);

    plan.iter()
        .map(|p| {
            let azimuth_deg = normalize_azimuth(p.azimuth_deg);
            let steering = steering_per_bin(geom, azimuth_deg, tensor.num_bins(), bin_hz, config.speed_of_sound);
            let weights = mvdr_weights(&covariances, &steering)?;
            let samples = apply_beamformer(&tensor, &weights)?;
            Ok(SeparatedStream {
                stream: DirectionalStream {
                    label: p.label.clone(),
                    azimuth_deg,
                    samples,
                    sample_rate_hz: audio.sample_rate_hz(),
                },
                weights,
            })
        })
        .collect()
}

pub fn separate_streams(
    audio: &MultichannelAudio,
    geom: &ArrayGeometry,
    plan: &[StreamPlan],
    config: &SeparationConfig,
) -> Result<Vec<DirectionalStream>> {
    Ok(separate_streams_detailed(audio, geom, plan, config)?
        .into_iter()
        .map(|s| s.stream)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::uma8_geometry;

    #[test]
    fn plan_validation() {
        assert!(matches!(validate_plan(&[], 20.0), Err(ArrayError::NoAzimuths)));
        let dup = [StreamPlan::new("a", 0.0), StreamPlan::new("a", 90.0)];
        assert!(matches!(validate_plan(&dup, 20.0), Err(ArrayError::DuplicateLabel(_))));
        let close = [StreamPlan::new("a", 355.0), StreamPlan::new("b", 5.0)];
        assert!(matches!(validate_plan(&close, 20.0), Err(ArrayError::AzimuthsTooClose { .. })));
        let ok = [StreamPlan::new("left", 135.0), StreamPlan::new("right", 45.0)];
        assert!(validate_plan(&ok, 20.0).is_ok());
    }

    #[test]
    fn channel_count_must_match_geometry() {
        let audio = MultichannelAudio::new(vec![vec![0.1; 1000]; 2], 16000).unwrap();
        let err = separate_streams(&audio, &uma8_geometry(), &[StreamPlan::new("x", 0.0)], &SeparationConfig::default());
        assert!(matches!(err, Err(ArrayError::ChannelMismatch { expected: 7, got: 2 })));
    }

    #[test]
    fn labeled_streams_keep_labels_and_length() {
        let n = 8000;
        let chans: Vec<Vec<f64>> = (0..7)
            .map(|c| (0..n).map(|i| ((i * (c + 3)) % 17) as f64 / 17.0 - 0.5).collect())
            .collect();
        let audio = MultichannelAudio::new(chans, 16000).unwrap();
        let plan = [StreamPlan::new("left", 135.0), StreamPlan::new("right", 45.0)];
        let streams = separate_streams(&audio, &uma8_geometry(), &plan, &SeparationConfig::default()).unwrap();
        assert_eq!(streams.len(), 2);
        assert_eq!(streams[0].label, "left");
        assert_eq!(streams[0].azimuth_deg, 135.0);
        assert_eq!(streams[1].label, "right");
        for s in &streams {
            assert_eq!(s.samples.len(), n);
            assert_eq!(s.duration_s(), audio.duration_s());
        }
    }

    #[test]
    fn unknown_bin_is_out_of_range() {
        let w = BeamformerWeights::uniform(
            0.0,
            (0..257).map(|b| b as f64 * 31.25).collect(),
            vec![Complex64::new(1.0, 0.0); 7],
        );
        assert!(matches!(
            beam_pattern(&w, &uma8_geometry(), 20_000.0, 1.0, 343.0),
            Err(ArrayError::BinOutOfRange { .. })
        ));
    }
}
