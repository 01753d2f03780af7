use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Far-field plane-wave phase pattern for one look direction and frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    pub azimuth_deg: f64,
    pub freq_hz: f64,
    pub elements: Vec<Complex64>,
}

/// Wraps an angle into `[0, 360)`.
pub fn normalize_azimuth(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Smallest absolute difference between two azimuths, in `[0, 180]`.
pub fn angular_distance(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Unit vector in the array plane pointing from the array toward `azimuth_deg`.
pub fn look_direction(azimuth_deg: f64) -> [f64; 3] {
    let t = azimuth_deg.to_radians();
    [t.cos(), t.sin(), 0.0]
}

/// Arrival-time advance of each mic relative to the array origin, in
/// seconds: mics closer to the source hear it earlier.
pub fn arrival_advances(geom: &ArrayGeometry, azimuth_deg: f64, speed_of_sound: f64) -> Vec<f64> {
    let u = look_direction(azimuth_deg);
    geom.mic_positions()
        .iter()
        .map(|p| (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / speed_of_sound)
        .collect()
}

/// `d_m = exp(+i 2π f (p_m · u) / c)`, so a mic that leads in time also
/// leads in phase.
pub fn steering_vector(
    geom: &ArrayGeometry,
    azimuth_deg: f64,
    freq_hz: f64,
    speed_of_sound: f64,
) -> SteeringVector {
    let elements = arrival_advances(geom, azimuth_deg, speed_of_sound)
        .into_iter()
        .map(|tau| Complex64::from_polar(1.0, 2.0 * PI * freq_hz * tau))
        .collect();
    SteeringVector {
        azimuth_deg: normalize_azimuth(azimuth_deg),
        freq_hz,
        elements,
    }
}

/// One steering vector per STFT bin, for bins spaced `bin_hz` apart.
pub fn steering_per_bin(
    geom: &ArrayGeometry,
    azimuth_deg: f64,
    num_bins: usize,
    bin_hz: f64,
    speed_of_sound: f64,
) -> Vec<SteeringVector> {
    (0..num_bins)
        .map(|b| steering_vector(geom, azimuth_deg, b as f64 * bin_hz, speed_of_sound))
        .collect()
}
