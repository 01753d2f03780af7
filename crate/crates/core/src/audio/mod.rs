//! Multichannel audio buffers, WAV I/O and the STFT used by every DSP stage.

mod stft;
mod wav;

pub use stft::{istft, stft, StftConfig, StftTensor, WindowKind};
pub use wav::{read_wav, read_wav_bytes, write_wav, write_wav_bytes, BitDepth, WriteReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("bad STFT configuration: {0}")]
    BadConfig(String),
    #[error("empty interval: start {start_s}s is not before the clamped end {end_s}s")]
    EmptyInterval { start_s: f64, end_s: f64 },
    #[error("invalid audio: {0}")]
    Invalid(String),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// Sample-aligned PCM channels sharing one sample rate.
///
/// Samples are `f64` in nominal range `[-1, 1]`; integer encodings are only
/// seen at the WAV boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelAudio {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: u32,
}

impl MultichannelAudio {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate_hz: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(AudioError::Invalid("at least one channel is required".into()));
        }
        if sample_rate_hz == 0 {
            return Err(AudioError::Invalid("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if let Some(i) = channels.iter().position(|c| c.len() != len) {
            return Err(AudioError::Invalid(format!(
                "channel {i} has {} samples, channel 0 has {len}",
                channels[i].len()
            )));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate_hz)
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.num_samples() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Sample-accurate copy of `[start_s, end_s)`; `end_s` is clamped to the
    /// recording length.
    pub fn slice(&self, start_s: f64, end_s: f64) -> Result<Self> {
        slice_audio(self, start_s, end_s)
    }
}

/// Converts a time in seconds to the nearest sample index.
pub fn seconds_to_sample(t_s: f64, sample_rate_hz: u32) -> usize {
    (t_s * f64::from(sample_rate_hz)).round().max(0.0) as usize
}

pub fn slice_audio(audio: &MultichannelAudio, start_s: f64, end_s: f64) -> Result<MultichannelAudio> {
    if !(start_s >= 0.0 && start_s < end_s) {
        return Err(AudioError::EmptyInterval { start_s, end_s });
    }
    let n = audio.num_samples();
    let start = seconds_to_sample(start_s, audio.sample_rate_hz);
    let end = seconds_to_sample(end_s, audio.sample_rate_hz).min(n);
    if start >= end {
        return Err(AudioError::EmptyInterval {
            start_s,
            end_s: end_s.min(audio.duration_s()),
        });
    }
    let channels = audio
        .channels
        .iter()
        .map(|c| c[start..end].to_vec())
        .collect();
    Ok(MultichannelAudio {
        channels,
        sample_rate_hz: audio.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, rate: u32) -> MultichannelAudio {
        let a: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        MultichannelAudio::new(vec![a, b], rate).unwrap()
    }

    #[test]
    fn rejects_ragged_channels() {
        let err = MultichannelAudio::new(vec![vec![0.0; 3], vec![0.0; 4]], 16000);
        assert!(matches!(err, Err(AudioError::Invalid(_))));
        assert!(MultichannelAudio::new(vec![], 16000).is_err());
        assert!(MultichannelAudio::new(vec![vec![0.0]], 0).is_err());
    }

    #[test]
    fn full_slice_is_identity() {
        let audio = ramp(48000, 16000);
        let s = audio.slice(0.0, audio.duration_s()).unwrap();
        assert_eq!(s, audio);
    }

    #[test]
    fn one_second_slice_starts_at_expected_index() {
        let audio = ramp(48000, 16000);
        let s = audio.slice(1.0, 2.0).unwrap();
        assert_eq!(s.num_samples(), 16000);
        assert_eq!(s.channel(0)[0], audio.channel(0)[16000]);
        assert_eq!(s.channel(1)[15999], audio.channel(1)[31999]);
    }

    #[test]
    fn slice_past_end_is_empty() {
        let audio = ramp(16000, 16000);
        let d = audio.duration_s();
        assert!(matches!(
            audio.slice(d + 1.0, d + 2.0),
            Err(AudioError::EmptyInterval { .. })
        ));
        assert!(matches!(
            audio.slice(0.5, 0.5),
            Err(AudioError::EmptyInterval { .. })
        ));
    }

    #[test]
    fn end_is_clamped() {
        let audio = ramp(16000, 16000);
        let s = audio.slice(0.5, 10.0).unwrap();
        assert_eq!(s.num_samples(), 8000);
    }

    #[test]
    fn adjacent_slices_concatenate_to_original() {
        let audio = ramp(37_123, 16000);
        for t in [0.1, 0.77, 1.5, 2.3] {
            let a = audio.slice(0.0, t).unwrap();
            let b = audio.slice(t, audio.duration_s()).unwrap();
            for ch in 0..2 {
                let mut joined = a.channel(ch).to_vec();
                joined.extend_from_slice(b.channel(ch));
                assert_eq!(joined, audio.channel(ch));
            }
        }
    }
}
