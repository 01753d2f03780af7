//! Direction-of-arrival estimation by steered response power with phase
//! transform weighting (SRP-PHAT) over a planar azimuth grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;
use super::steering::{angular_distance, steering_vector, DEFAULT_SPEED_OF_SOUND};
use super::{ArrayError, Result};
use crate::audio::StftTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoaConfig {
    pub grid_resolution_deg: f64,
    pub max_peaks: usize,
    pub min_separation_deg: f64,
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
    pub speed_of_sound: f64,
    /// Mean in-band `|X|²` below which the input is treated as silence.
    pub silence_threshold: f64,
}

impl Default for DoaConfig {
    fn default() -> Self {
        Self {
            grid_resolution_deg: 1.0,
            max_peaks: 4,
            min_separation_deg: 20.0,
            min_freq_hz: 300.0,
            max_freq_hz: 4000.0,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            silence_threshold: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaPeak {
    pub azimuth_deg: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub grid_deg: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// Local maxima, strongest first, pairwise at least `min_separation_deg` apart.
    pub peaks: Vec<DoaPeak>,
}

impl DoaEstimate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("azimuth_deg,value\n");
        for (a, v) in self.grid_deg.iter().zip(&self.spectrum) {
            out.push_str(&format!("{a},{v}\n"));
        }
        out
    }
}

pub fn srp_phat(stft: &StftTensor, geom: &ArrayGeometry, config: &DoaConfig) -> Result<DoaEstimate> {
    let (m, frames, _) = stft.data().dim();
    if m != geom.num_mics() {
        return Err(ArrayError::ChannelMismatch {
            expected: geom.num_mics(),
            got: m,
        });
    }
    if frames == 0 {
        return Err(ArrayError::EmptyTensor);
    }
    if !(config.grid_resolution_deg > 0.0 && config.grid_resolution_deg <= 180.0) {
        return Err(ArrayError::InvalidConfig("grid resolution must be in (0, 180]".into()));
    }
    let bins: Vec<usize> = (0..stft.num_bins())
        .filter(|&b| {
            let f = stft.bin_frequency(b);
            f >= config.min_freq_hz && f <= config.max_freq_hz
        })
        .collect();
    if bins.is_empty() {
        return Err(ArrayError::InvalidConfig("no STFT bins inside the DOA band".into()));
    }

    let data = stft.data();
    let energy: f64 = bins
        .iter()
        .map(|&b| (0..m).map(|ch| (0..frames).map(|f| data[[ch, f, b]].norm_sqr()).sum::<f64>()).sum::<f64>())
        .sum::<f64>()
        / (m * frames * bins.len()) as f64;
    if energy < config.silence_threshold {
        return Err(ArrayError::SilentInput { energy });
    }

    // Frame-summed PHAT cross-spectra: C[b] = Σ_f z zᴴ with z_m = X_m / |X_m|.
    // The steered power for a look direction is then Σ_b dᴴ C[b] d.
    let cross: Vec<Vec<Complex64>> = bins
        .par_iter()
        .map(|&b| {
            let mut c = vec![Complex64::default(); m * m];
            let mut z = vec![Complex64::default(); m];
            for f in 0..frames {
                for (ch, slot) in z.iter_mut().enumerate() {
                    let x = data[[ch, f, b]];
                    let mag = x.norm();
                    *slot = if mag > 0.0 { x / mag } else { Complex64::default() };
                }
                for i in 0..m {
                    for j in 0..m {
                        c[i * m + j] += z[i] * z[j].conj();
                    }
                }
            }
            c
        })
        .collect();

    let steps = (360.0 / config.grid_resolution_deg).round() as usize;
    let grid_deg: Vec<f64> = (0..steps).map(|i| i as f64 * config.grid_resolution_deg).collect();
    let spectrum: Vec<f64> = grid_deg
        .par_iter()
        .map(|&az| {
            bins.iter()
                .zip(&cross)
                .map(|(&b, c)| {
                    let d = steering_vector(geom, az, stft.bin_frequency(b), config.speed_of_sound).elements;
                    let mut acc = Complex64::default();
                    for i in 0..m {
                        let mut row = Complex64::default();
                        for j in 0..m {
                            row += c[i * m + j] * d[j];
                        }
                        acc += d[i].conj() * row;
                    }
                    acc.re
                })
                .sum::<f64>()
                / frames as f64
        })
        .collect();

    let peaks = pick_peaks(&grid_deg, &spectrum, config.max_peaks, config.min_separation_deg);
    Ok(DoaEstimate {
        grid_deg,
        spectrum,
        peaks,
    })
}

/// Circular local maxima, strongest first, greedily thinned to keep
/// `min_separation_deg` between accepted peaks.
pub fn pick_peaks(grid_deg: &[f64], spectrum: &[f64], max_peaks: usize, min_separation_deg: f64) -> Vec<DoaPeak> {
    let n = spectrum.len();
    let mut candidates: Vec<DoaPeak> = (0..n)
        .filter(|&i| {
            let prev = spectrum[(i + n - 1) % n];
            let next = spectrum[(i + 1) % n];
            spectrum[i] >= prev && spectrum[i] > next
        })
        .map(|i| DoaPeak {
            azimuth_deg: grid_deg[i],
            score: spectrum[i],
        })
        .collect();
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.azimuth_deg.total_cmp(&b.azimuth_deg)));

    let mut peaks: Vec<DoaPeak> = Vec::new();
    for c in candidates {
        if peaks.len() >= max_peaks {
            break;
        }
        if peaks
            .iter()
            .all(|p| angular_distance(p.azimuth_deg, c.azimuth_deg) >= min_separation_deg)
        {
            peaks.push(c);
        }
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peaks_wrap_around_and_respect_separation() {
        let grid: Vec<f64> = (0..360).map(f64::from).collect();
        let mut spec = vec![0.0; 360];
        spec[0] = 5.0;
        spec[359] = 4.0;
        spec[10] = 4.5;
        spec[9] = 1.0;
        spec[11] = 1.0;
        spec[90] = 3.0;
        let peaks = pick_peaks(&grid, &spec, 4, 20.0);
        let az: Vec<f64> = peaks.iter().map(|p| p.azimuth_deg).collect();
        // 10° is a local max but too close to 0°
        assert_eq!(az, vec![0.0, 90.0]);
    }

    #[test]
    fn plateau_yields_one_peak() {
        let grid: Vec<f64> = (0..8).map(|i| f64::from(i) * 45.0).collect();
        let spec = vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let peaks = pick_peaks(&grid, &spec, 4, 20.0);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].azimuth_deg, 90.0);
    }
}
