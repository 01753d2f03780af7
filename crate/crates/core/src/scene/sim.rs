use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use super::{Result, SceneError};
use crate::array::{arrival_advances, ArrayGeometry, DEFAULT_SPEED_OF_SOUND};
use crate::audio::MultichannelAudio;

pub const MAX_DELAY_S: f64 = 0.010;

#[derive(Debug, Clone)]
pub struct SceneSource {
    pub azimuth_deg: f64,
    pub signal: Vec<f64>,
    pub gain: f64,
    pub sample_rate_hz: u32,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub sources: Vec<SceneSource>,
    pub geometry: ArrayGeometry,
    /// Diffuse (spatially white) noise level relative to the summed sources
    /// at the reference mic; `None` disables noise.
    pub noise_snr_db: Option<f64>,
    pub sample_rate_hz: u32,
    pub seed: u64,
    pub speed_of_sound: f64,
}

impl SceneSpec {
    pub fn new(geometry: ArrayGeometry, sample_rate_hz: u32) -> Self {
        Self {
            sources: Vec::new(),
            geometry,
            noise_snr_db: None,
            sample_rate_hz,
            seed: 0,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }

    pub fn with_source(mut self, azimuth_deg: f64, signal: Vec<f64>, gain: f64) -> Self {
        let sample_rate_hz = self.sample_rate_hz;
        self.sources.push(SceneSource {
            azimuth_deg,
            signal,
            gain,
            sample_rate_hz,
        });
        self
    }

    pub fn with_noise(mut self, snr_db: f64, seed: u64) -> Self {
        self.noise_snr_db = Some(snr_db);
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub mixture: MultichannelAudio,
    /// Each source as received at the reference mic (gain applied, no delay).
    pub references: Vec<Vec<f64>>,
    /// The noise actually added at the reference mic, if any.
    pub reference_noise: Option<Vec<f64>>,
    pub reference_mic: usize,
}

/// Band-limited delay by phase rotation `exp(-i 2π f τ)` of the zero-padded
/// signal spectrum. Positive `tau_s` delays; integer-sample delays are exact
/// shifts.
pub fn fractional_delay(signal: &[f64], tau_s: f64, sample_rate_hz: u32) -> Result<Vec<f64>> {
    if tau_s.is_nan() || tau_s.abs() >= MAX_DELAY_S {
        return Err(SceneError::DelayTooLarge { tau_s });
    }
    let n = signal.len();
    if n == 0 || tau_s == 0.0 {
        return Ok(signal.to_vec());
    }
    let fs = f64::from(sample_rate_hz);
    let guard = (tau_s.abs() * fs).ceil() as usize + 64;
    let len = (n + 2 * guard).next_power_of_two();
    let mut buf: Vec<Complex64> = vec![Complex64::default(); len];
    for (slot, &x) in buf[guard..].iter_mut().zip(signal) {
        *slot = Complex64::new(x, 0.0);
    }

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        let freq = if k <= half { k as f64 } else { k as f64 - len as f64 } * fs / len as f64;
        if k == half {
            // keep the Nyquist term real
            *v *= (2.0 * PI * freq * tau_s).cos();
        } else {
            *v *= Complex64::from_polar(1.0, -2.0 * PI * freq * tau_s);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    Ok(buf[guard..guard + n].iter().map(|c| c.re * scale).collect())
}

/// Free-field mixture at every mic: each source arrives as a plane wave from
/// its azimuth, mics nearer the source hearing it earlier.
pub fn simulate_scene(spec: &SceneSpec) -> Result<SimulatedScene> {
    if spec.sources.is_empty() {
        return Err(SceneError::NoSources);
    }
    if let Some(s) = spec.sources.iter().find(|s| s.sample_rate_hz != spec.sample_rate_hz) {
        return Err(SceneError::RateMismatch {
            expected: spec.sample_rate_hz,
            got: s.sample_rate_hz,
        });
    }
    let n = spec.sources.iter().map(|s| s.signal.len()).max().unwrap_or(0);
    let m = spec.geometry.num_mics();
    let reference_mic = spec.geometry.reference_mic().unwrap_or(0);
    let mut channels = vec![vec![0.0; n]; m];
    let mut references = Vec::with_capacity(spec.sources.len());

    for source in &spec.sources {
        let mut padded = source.signal.iter().map(|v| v * source.gain).collect::<Vec<_>>();
        padded.resize(n, 0.0);
        let advances = arrival_advances(&spec.geometry, source.azimuth_deg, spec.speed_of_sound);
        for (ch, &advance) in channels.iter_mut().zip(&advances) {
            let delayed = fractional_delay(&padded, -advance, spec.sample_rate_hz)?;
            ch.iter_mut().zip(&delayed).for_each(|(acc, v)| *acc += v);
        }
        let reference = fractional_delay(&padded, -advances[reference_mic], spec.sample_rate_hz)?;
        references.push(reference);
    }

    let mut reference_noise = None;
    if let Some(snr_db) = spec.noise_snr_db {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let signal_power: f64 = channels[reference_mic].iter().map(|v| v * v).sum();
        let noise_power: f64 = noise[reference_mic].iter().map(|v| v * v).sum();
        if noise_power > 0.0 && signal_power > 0.0 {
            let scale = (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
            for (ch, nz) in channels.iter_mut().zip(&noise) {
                ch.iter_mut().zip(nz).for_each(|(acc, v)| *acc += scale * v);
            }
            reference_noise = Some(noise[reference_mic].iter().map(|v| v * scale).collect());
        }
    }

    Ok(SimulatedScene {
        mixture: MultichannelAudio::new(channels, spec.sample_rate_hz)
            .map_err(|e| SceneError::Invalid(e.to_string()))?,
        references,
        reference_noise,
        reference_mic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::uma8_geometry;
    use crate::scene::synth_speech;

    #[test]
    fn zero_delay_is_identity() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let y = fractional_delay(&x, 0.0, 16000).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn integer_delay_matches_shift() {
        let x = synth_speech(4, 0.5, 16000, 130.0);
        let y = fractional_delay(&x, 3.0 / 16000.0, 16000).unwrap();
        for i in 3..x.len() {
            assert!((y[i] - x[i - 3]).abs() < 1e-6, "sample {i}");
        }
    }

    #[test]
    fn sinusoid_phase_lag() {
        // fit a·sin + b·cos to the interior of the output and read the phase
        let fs = 16000.0;
        let f = 500.0;
        let x: Vec<f64> = (0..16000).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let y = fractional_delay(&x, 0.00025, 16000).unwrap();
        let (mut s, mut c) = (0.0, 0.0);
        for (i, v) in y.iter().enumerate().take(15000).skip(1000) {
            let t = 2.0 * PI * f * i as f64 / fs;
            s += v * t.sin();
            c += v * t.cos();
        }
        let lag = -c.atan2(s);
        assert!((lag - PI / 4.0).abs() < 1e-3, "lag {lag}");
    }

    #[test]
    fn delay_bound_is_enforced() {
        assert!(matches!(
            fractional_delay(&[0.0; 10], 0.02, 16000),
            Err(SceneError::DelayTooLarge { .. })
        ));
    }

    #[test]
    fn single_source_reaches_center_mic_unchanged() {
        let x = synth_speech(1, 1.0, 16000, 120.0);
        let spec = SceneSpec::new(uma8_geometry(), 16000).with_source(70.0, x.clone(), 1.0);
        let scene = simulate_scene(&spec).unwrap();
        assert_eq!(scene.mixture.num_channels(), 7);
        for (a, b) in scene.mixture.channel(0).iter().zip(&x) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let mut spec = SceneSpec::new(uma8_geometry(), 16000).with_source(0.0, vec![0.1; 100], 1.0);
        spec.sources[0].sample_rate_hz = 8000;
        assert!(matches!(simulate_scene(&spec), Err(SceneError::RateMismatch { .. })));
        let empty = SceneSpec::new(uma8_geometry(), 16000);
        assert!(matches!(simulate_scene(&empty), Err(SceneError::NoSources)));
    }

    #[test]
    fn incoherent_sources_add_in_energy() {
        let a = synth_speech(10, 4.0, 16000, 110.0);
        let b = synth_speech(20, 4.0, 16000, 210.0);
        let spec = SceneSpec::new(uma8_geometry(), 16000)
            .with_source(45.0, a.clone(), 1.0)
            .with_source(135.0, b.clone(), 1.0);
        let scene = simulate_scene(&spec).unwrap();
        let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let mix = energy(scene.mixture.channel(0));
        let sum = energy(&a) + energy(&b);
        assert!((mix / sum - 1.0).abs() < 0.05, "ratio {}", mix / sum);
    }

    #[test]
    fn noise_hits_requested_snr() {
        let a = synth_speech(10, 2.0, 16000, 110.0);
        let spec = SceneSpec::new(uma8_geometry(), 16000)
            .with_source(45.0, a, 1.0)
            .with_noise(0.0, 99);
        let scene = simulate_scene(&spec).unwrap();
        let noise = scene.reference_noise.as_ref().unwrap();
        let mix = scene.mixture.channel(0);
        let signal: Vec<f64> = mix.iter().zip(noise).map(|(m, n)| m - n).collect();
        let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let snr = 10.0 * (energy(&signal) / energy(noise)).log10();
        assert!(snr.abs() < 0.1, "snr {snr}");
    }
}
