//! Short-Time Objective Intelligibility.
//!
//! Follows the reference algorithm: signals are resampled to 10 kHz, frames more
//! than 40 dB below the loudest clean frame are dropped, 15 one-third-octave
//! band envelopes from 150 Hz are built from a 256-sample / 50 % overlap STFT,
//! and the score is the mean correlation between clean and normalized,
//! clipped processed envelopes over 30-frame (384 ms) segments.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Result, SceneError};

pub const STOI_INPUT_RATE_HZ: u32 = 16_000;
const INTERNAL_RATE_HZ: usize = 10_000;
const FRAME_LEN: usize = 256;
const HOP: usize = FRAME_LEN / 2;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ_HZ: f64 = 150.0;
const SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;

/// Intelligibility of `estimate` relative to the clean `reference`, both at
/// 16 kHz. Typical range is 0 to 1.
pub fn stoi(reference: &[f64], estimate: &[f64], sample_rate_hz: u32) -> Result<f64> {
    if sample_rate_hz != STOI_INPUT_RATE_HZ {
        return Err(SceneError::UnsupportedRate(sample_rate_hz));
    }
    if reference.len() != estimate.len() {
        return Err(SceneError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    let min_len = (0.384 * f64::from(sample_rate_hz)) as usize;
    if reference.len() < min_len {
        return Err(SceneError::TooShort);
    }

    let x = resample_16k_to_10k(reference);
    let y = resample_16k_to_10k(estimate);
    let (x, y) = remove_silent_frames(&x, &y);

    let window = analysis_window();
    let band_matrix = third_octave_bands();
    let x_bands = band_envelopes(&x, &window, &band_matrix);
    let y_bands = band_envelopes(&y, &window, &band_matrix);
    let frames = x_bands.first().map_or(0, Vec::len);
    if frames < SEGMENT_FRAMES {
        return Err(SceneError::TooShort);
    }

    let clip = 10f64.powf(-BETA_DB / 20.0);
    let eps = f64::EPSILON;
    let mut total = 0.0;
    let segments = frames - SEGMENT_FRAMES + 1;
    for m in SEGMENT_FRAMES..=frames {
        for (xb, yb) in x_bands.iter().zip(&y_bands) {
            let xs = &xb[m - SEGMENT_FRAMES..m];
            let ys = &yb[m - SEGMENT_FRAMES..m];
            let norm_const = l2(xs) / (l2(ys) + eps);
            let mut y_prime: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(yv, xv)| (yv * norm_const).min(xv * (1.0 + clip)))
                .collect();
            let mut x_seg = xs.to_vec();
            center(&mut y_prime);
            center(&mut x_seg);
            let ny = l2(&y_prime) + eps;
            let nx = l2(&x_seg) + eps;
            total += y_prime.iter().zip(&x_seg).map(|(a, b)| (a / ny) * (b / nx)).sum::<f64>();
        }
    }
    Ok(total / (segments * NUM_BANDS) as f64)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Hann window without its zero end points, as used by the reference
/// implementation (`hanning(N + 2)[1..N+1]`).
fn analysis_window() -> Vec<f64> {
    (1..=FRAME_LEN)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (FRAME_LEN + 1) as f64).cos())
        .collect()
}

const UP: usize = 5;
const DOWN: usize = 8;

/// Rational 5/8 resampler with the Kaiser-windowed sinc anti-aliasing
/// filter of the reference implementation (60 dB rejection, transition
/// width one tenth of the cutoff), zero-padded at both ends.
fn resample_16k_to_10k(x: &[f64]) -> Vec<f64> {
    let h = resample_filter();
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * UP).div_ceil(DOWN);
    (0..n_out)
        .map(|m| {
            // output m sits at position m*DOWN of the upsampled grid
            let pos = (m * DOWN) as isize;
            let mut acc = 0.0;
            let lo = (pos - half as isize).max(0);
            let first = lo + (UP as isize - lo % UP as isize) % UP as isize;
            let hi = (pos + half as isize).min((x.len() * UP) as isize - 1);
            let mut u = first;
            while u <= hi {
                acc += h[(pos - u + half as isize) as usize] * x[u as usize / UP];
                u += UP as isize;
            }
            acc
        })
        .collect()
}

fn resample_filter() -> Vec<f64> {
    let rejection_db = 60.0;
    let cutoff = 1.0 / (2 * UP.max(DOWN)) as f64;
    let roll_off = cutoff / 10.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as usize;
    let beta = 0.1102 * (rejection_db - 8.7);
    let len = 2 * half + 1;
    let i0_beta = bessel_i0(beta);
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 - half as f64;
            let r = 2.0 * i as f64 / (len - 1) as f64 - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            let arg = 2.0 * cutoff * t;
            let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
            kaiser * sinc
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v * UP as f64 / sum).collect()
}

fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    // frames start at 0, HOP, ... strictly before len - FRAME_LEN
    (0..len.saturating_sub(FRAME_LEN)).step_by(HOP)
}

/// Drops frames whose clean-signal energy is more than 40 dB below the
/// loudest frame and rebuilds both signals by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = analysis_window();
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy = |s: usize| {
        let e = x[s..s + FRAME_LEN]
            .iter()
            .zip(&w)
            .map(|(v, wv)| (v * wv).powi(2))
            .sum::<f64>()
            .sqrt();
        20.0 * (e + f64::EPSILON).log10()
    };
    let energies: Vec<f64> = starts.iter().map(|&s| energy(s)).collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * HOP + FRAME_LEN;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        let o = i * HOP;
        for j in 0..FRAME_LEN {
            xs[o + j] += w[j] * x[s + j];
            ys[o + j] += w[j] * y[s + j];
        }
    }
    (xs, ys)
}

/// Bin ranges `[lo, hi)` grouping the `NFFT/2 + 1` bins into one-third octave bands,
/// with band edges snapped to the nearest bin.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let fs = INTERNAL_RATE_HZ as f64;
    let bins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * fs / NFFT as f64).collect();
    let nearest = |target: f64| {
        freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).powi(2).total_cmp(&(b.1 - target).powi(2)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    (0..NUM_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ_HZ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ_HZ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// `[band][frame]` one-third octave magnitudes.
fn band_envelopes(x: &[f64], window: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let mut out = vec![Vec::new(); bands.len()];
    let mut buf = vec![Complex64::default(); NFFT];
    for s in frame_starts(x.len()) {
        buf.iter_mut().for_each(|c| *c = Complex64::default());
        for j in 0..FRAME_LEN {
            buf[j] = Complex64::new(x[s + j] * window[j], 0.0);
        }
        fft.process(&mut buf);
        for (band, &(lo, hi)) in out.iter_mut().zip(bands) {
            let power: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            band.push(power.sqrt());
        }
    }
    out
}
