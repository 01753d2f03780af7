use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioError, MultichannelAudio, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    PeriodicHann,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::PeriodicHann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 32 ms / 16 ms at 16 kHz.
    fn default() -> Self {
        Self {
            window_size: 512,
            hop_size: 256,
            window: WindowKind::PeriodicHann,
        }
    }
}

impl StftConfig {
    pub fn new(window_size: usize, hop_size: usize) -> Result<Self> {
        let cfg = Self {
            window_size,
            hop_size,
            window: WindowKind::PeriodicHann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts power-of-two windows with a hop that divides the window and
    /// gives at least two overlapping frames per sample; a periodic Hann at
    /// hop == window has a zero at every frame boundary and cannot be
    /// inverted.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.window_size, self.hop_size);
        if w < 4 || !w.is_power_of_two() {
            return Err(AudioError::BadConfig(format!(
                "window size {w} must be a power of two >= 4"
            )));
        }
        if h == 0 || w % h != 0 || h > w / 2 {
            return Err(AudioError::BadConfig(format!(
                "hop {h} must divide window {w} and be at most half of it"
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Leading zero padding so every input sample is covered by the full
    /// set of overlapping frames.
    pub fn padding(&self) -> usize {
        self.window_size - self.hop_size
    }

    pub fn num_frames(&self, signal_len: usize) -> usize {
        (signal_len + self.padding()).div_ceil(self.hop_size)
    }

    pub fn bin_frequency(&self, bin: usize, sample_rate_hz: u32) -> f64 {
        bin as f64 * f64::from(sample_rate_hz) / self.window_size as f64
    }
}

/// Complex spectra indexed `[channel, frame, bin]`.
///
/// Frame `f` covers samples `[f*hop - pad, f*hop - pad + window)` of the
/// original signal, where `pad = window - hop` and out-of-range samples are
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StftTensor {
    data: Array3<Complex64>,
    config: StftConfig,
    sample_rate_hz: u32,
    signal_len: usize,
}

impl StftTensor {
    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn window_size(&self) -> usize {
        self.config.window_size
    }

    pub fn hop_size(&self) -> usize {
        self.config.hop_size
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn num_channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn num_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn num_bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        self.config.bin_frequency(bin, self.sample_rate_hz)
    }

    /// `[frame, bin]` view of one channel.
    pub fn channel(&self, ch: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), ch)
    }

    /// Builds a single-channel tensor with this tensor's framing.
    pub fn mono_like(&self, frames: Array2<Complex64>) -> Result<StftTensor> {
        if frames.dim() != (self.num_frames(), self.num_bins()) {
            return Err(AudioError::BadConfig(format!(
                "frame grid {:?} does not match ({}, {})",
                frames.dim(),
                self.num_frames(),
                self.num_bins()
            )));
        }
        Ok(StftTensor {
            data: frames.insert_axis(Axis(0)),
            config: self.config,
            sample_rate_hz: self.sample_rate_hz,
            signal_len: self.signal_len,
        })
    }

    /// Assembles a tensor from raw parts, e.g. to synthesize from edited spectra.
    pub fn from_parts(
        data: Array3<Complex64>,
        config: StftConfig,
        sample_rate_hz: u32,
        signal_len: usize,
    ) -> Result<StftTensor> {
        config.validate()?;
        let (_, frames, bins) = data.dim();
        if bins != config.num_bins() || frames != config.num_frames(signal_len) {
            return Err(AudioError::BadConfig(format!(
                "tensor shape {:?} inconsistent with window {} / hop {} over {signal_len} samples",
                data.dim(),
                config.window_size,
                config.hop_size
            )));
        }
        Ok(StftTensor {
            data,
            config,
            sample_rate_hz,
            signal_len,
        })
    }
}

pub fn stft(audio: &MultichannelAudio, config: StftConfig) -> Result<StftTensor> {
    config.validate()?;
    let n = audio.num_samples();
    let (frames, bins) = (config.num_frames(n), config.num_bins());
    let window = config.window.coefficients(config.window_size);
    let fft = FftPlanner::new().plan_fft_forward(config.window_size);

    let per_channel: Vec<Array2<Complex64>> = audio
        .channels()
        .par_iter()
        .map(|signal| analyze_channel(signal, &config, &window, &fft))
        .collect();

    let mut data = Array3::zeros((audio.num_channels(), frames, bins));
    for (ch, spec) in per_channel.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), ch).assign(&spec);
    }
    Ok(StftTensor {
        data,
        config,
        sample_rate_hz: audio.sample_rate_hz(),
        signal_len: n,
    })
}

fn analyze_channel(
    signal: &[f64],
    config: &StftConfig,
    window: &[f64],
    fft: &Arc<dyn Fft<f64>>,
) -> Array2<Complex64> {
    let (w, hop, pad) = (config.window_size, config.hop_size, config.padding());
    let frames = config.num_frames(signal.len());
    let mut out = Array2::zeros((frames, config.num_bins()));
    let mut buf = vec![Complex64::default(); w];
    for f in 0..frames {
        let origin = (f * hop) as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = origin + i as isize;
            let x = if idx >= 0 && (idx as usize) < signal.len() {
                signal[idx as usize]
            } else {
                0.0
            };
            *slot = Complex64::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (dst, src) in out.row_mut(f).iter_mut().zip(&buf) {
            *dst = *src;
        }
    }
    out
}

/// Weighted overlap-add synthesis of a single-channel tensor.
///
/// Each frame is re-windowed and the sum is normalized by the accumulated
/// squared window, which makes `istft(stft(x)) == x` for any valid config.
pub fn istft(tensor: &StftTensor) -> Result<Vec<f64>> {
    if tensor.num_channels() != 1 {
        return Err(AudioError::BadConfig(format!(
            "istft expects one channel, got {}",
            tensor.num_channels()
        )));
    }
    let config = tensor.config;
    config.validate()?;
    let (w, hop, pad) = (config.window_size, config.hop_size, config.padding());
    let window = config.window.coefficients(w);
    let ifft = FftPlanner::new().plan_fft_inverse(w);
    let padded_len = (tensor.num_frames().saturating_sub(1)) * hop + w;
    let mut acc = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    let mut buf = vec![Complex64::default(); w];
    let spectra = tensor.channel(0);
    let scale = 1.0 / w as f64;

    for (f, row) in spectra.outer_iter().enumerate() {
        let half = w / 2;
        buf[0] = row[0];
        buf[half] = row[half];
        for k in 1..half {
            buf[k] = row[k];
            buf[w - k] = row[k].conj();
        }
        ifft.process(&mut buf);
        let start = f * hop;
        for i in 0..w {
            acc[start + i] += buf[i].re * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    Ok((0..tensor.signal_len)
        .map(|i| {
            let p = i + pad;
            if norm[p] > 1e-12 {
                acc[p] / norm[p]
            } else {
                0.0
            }
        })
        .collect())
}
