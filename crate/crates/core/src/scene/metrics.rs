use serde::{Deserialize, Serialize};

use super::{Result, SceneError};

/// Values are clamped to ±60 dB so identical signals give a finite score.
pub const SI_SDR_CAP_DB: f64 = 60.0;

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// The estimate is projected onto the reference; the projection is the
/// target and the remainder is distortion.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(SceneError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(SceneError::ZeroReference);
    }
    let alpha = reference.iter().zip(estimate).map(|(r, e)| r * e).sum::<f64>() / ref_energy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (r, e) in reference.iter().zip(estimate) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    let db = if target == 0.0 {
        -SI_SDR_CAP_DB
    } else if residual == 0.0 {
        SI_SDR_CAP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Before/after quality for one separated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMetrics {
    pub label: String,
    pub azimuth_deg: f64,
    pub stoi_before: f64,
    pub stoi_after: f64,
    pub si_sdr_before_db: f64,
    pub si_sdr_after_db: f64,
}

impl StreamMetrics {
    pub fn stoi_gain(&self) -> f64 {
        self.stoi_after - self.stoi_before
    }

    pub fn si_sdr_gain_db(&self) -> f64 {
        self.si_sdr_after_db - self.si_sdr_before_db
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Channel used as the unprocessed "before" signal.
    pub before_channel: usize,
    pub streams: Vec<StreamMetrics>,
}
