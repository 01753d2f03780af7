//! Deterministic speech-like test signals.
//!
//! Produces phrases of voiced syllables (harmonic source shaped by vowel
//! formants, syllabic amplitude envelope, drifting pitch) separated by
//! pauses, with short fricative bursts at some syllable onsets. Enough
//! structure for envelope-based intelligibility metrics and for spatial
//! estimation, without needing recorded speech.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Formant frequencies (Hz) for a handful of vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BANDWIDTH_HZ: [f64; 3] = [90.0, 110.0, 170.0];
const MAX_HARMONIC_HZ: f64 = 4800.0;

#[derive(Debug, Clone, Copy)]
enum Segment {
    Syllable { len: usize, vowel: usize, fricative: usize },
    Pause { len: usize },
}

/// `duration_s` of speech-like audio at `sample_rate_hz`, with pitch around
/// `base_f0_hz`. Same inputs give bit-identical output. Peak amplitude 0.5.
pub fn synth_speech(seed: u64, duration_s: f64, sample_rate_hz: u32, base_f0_hz: f64) -> Vec<f64> {
    let fs = f64::from(sample_rate_hz);
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = |v: f64| (v * fs / 1000.0) as usize;

    let mut plan = Vec::new();
    let mut total = 0;
    while total < n {
        let syllables = rng.random_range(3..=8);
        for _ in 0..syllables {
            let len = ms(rng.random_range(120.0..280.0));
            let fricative = if rng.random_bool(0.4) { ms(rng.random_range(30.0..70.0)) } else { 0 };
            plan.push(Segment::Syllable {
                len,
                vowel: rng.random_range(0..VOWELS.len()),
                fricative,
            });
            total += len + fricative;
        }
        let len = ms(rng.random_range(150.0..500.0));
        plan.push(Segment::Pause { len });
        total += len;
    }

    let mut out = Vec::with_capacity(total);
    let mut phases = vec![0.0f64; (MAX_HARMONIC_HZ / (0.5 * base_f0_hz)) as usize + 2];
    let pitch_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let mut hp_prev = 0.0;

    for seg in plan {
        match seg {
            Segment::Pause { len } => out.extend(std::iter::repeat_n(0.0, len)),
            Segment::Syllable { len, vowel, fricative } => {
                for i in 0..fricative {
                    let white: f64 = StandardNormal.sample(&mut rng);
                    let hp = white - hp_prev;
                    hp_prev = white;
                    let env = (PI * i as f64 / fricative as f64).sin();
                    out.push(0.06 * env * hp);
                }
                let formants = VOWELS[vowel];
                let jitter: f64 = rng.random_range(0.92..1.08);
                let attack = ms(20.0).max(1);
                let release = ms(40.0).max(1);
                let mut amps: Vec<f64> = Vec::new();
                for i in 0..len {
                    let t = out.len() as f64 / fs;
                    let f0 = base_f0_hz * jitter * (1.0 + 0.08 * (2.0 * PI * 0.7 * t + pitch_phase).sin())
                        * (1.0 - 0.1 * i as f64 / len as f64);
                    if i % 64 == 0 {
                        amps = harmonic_amplitudes(f0, &formants);
                    }
                    let env = if i < attack {
                        0.5 - 0.5 * (PI * i as f64 / attack as f64).cos()
                    } else if i + release > len {
                        0.5 - 0.5 * (PI * (len - i) as f64 / release as f64).cos()
                    } else {
                        1.0
                    };
                    let mut s = 0.0;
                    for (k, (a, ph)) in amps.iter().zip(phases.iter_mut()).enumerate() {
                        *ph = (*ph + 2.0 * PI * (k + 1) as f64 * f0 / fs) % (2.0 * PI);
                        s += a * ph.sin();
                    }
                    let breath: f64 = StandardNormal.sample(&mut rng);
                    out.push(env * (s + 0.004 * breath));
                }
            }
        }
    }
    out.truncate(n);
    out.resize(n, 0.0);

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

fn harmonic_amplitudes(f0: f64, formants: &[f64; 3]) -> Vec<f64> {
    let count = (MAX_HARMONIC_HZ / f0) as usize;
    (1..=count)
        .map(|k| {
            let f = k as f64 * f0;
            let resonance: f64 = formants
                .iter()
                .zip(FORMANT_BANDWIDTH_HZ)
                .enumerate()
                .map(|(j, (&fc, bw))| {
                    let x = (f - fc) / bw;
                    (0.7f64).powi(j as i32) / (1.0 + x * x)
                })
                .sum();
            // glottal source rolls off roughly 12 dB/octave
            let tilt = 1.0 / (1.0 + (f / 300.0).powi(2)).sqrt();
            0.1 * (resonance + 0.02) * tilt
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = synth_speech(1, 2.0, 16000, 120.0);
        let b = synth_speech(1, 2.0, 16000, 120.0);
        assert_eq!(a.len(), 32000);
        assert_eq!(a, b);
        assert_ne!(a, synth_speech(2, 2.0, 16000, 120.0));
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
    }

    #[test]
    fn has_pauses_and_activity() {
        let x = synth_speech(9, 5.0, 16000, 180.0);
        let frame = 320;
        let energies: Vec<f64> = x.chunks(frame).map(|c| c.iter().map(|v| v * v).sum()).collect();
        let max = energies.iter().cloned().fold(0.0, f64::max);
        let quiet = energies.iter().filter(|&&e| e < max * 1e-4).count();
        let loud = energies.iter().filter(|&&e| e > max * 0.1).count();
        assert!(quiet > 5, "expected pauses, got {quiet}");
        assert!(loud > energies.len() / 4, "expected speech activity, got {loud}");
    }
}
