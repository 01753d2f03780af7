//! Minimum Variance Distortionless Response weights.
//!
//! For each bin, `w = R⁻¹d / (dᴴR⁻¹d)`: the output power `wᴴRw` is minimized
//! subject to unit gain `wᴴd = 1` toward the steering direction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::CovarianceMatrix;
use super::steering::SteeringVector;
use super::{ArrayError, Result};

pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Per-bin complex weights steering one beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerWeights {
    pub azimuth_deg: f64,
    /// Center frequency of each bin.
    pub bin_freqs_hz: Vec<f64>,
    pub weights_per_bin: Vec<Vec<Complex64>>,
}

impl BeamformerWeights {
    pub fn num_bins(&self) -> usize {
        self.weights_per_bin.len()
    }

    pub fn num_mics(&self) -> usize {
        self.weights_per_bin.first().map_or(0, Vec::len)
    }

    /// Same weights on every bin, e.g. a channel selector.
    pub fn uniform(azimuth_deg: f64, bin_freqs_hz: Vec<f64>, weights: Vec<Complex64>) -> Self {
        let weights_per_bin = vec![weights; bin_freqs_hz.len()];
        Self {
            azimuth_deg,
            bin_freqs_hz,
            weights_per_bin,
        }
    }

    /// Bin whose center frequency is nearest to `freq_hz`, if within half a bin.
    pub fn bin_for_frequency(&self, freq_hz: f64) -> Option<usize> {
        if self.bin_freqs_hz.len() < 2 {
            return None;
        }
        let spacing = self.bin_freqs_hz[1] - self.bin_freqs_hz[0];
        let bin = (freq_hz / spacing).round();
        if bin < 0.0 || (freq_hz - bin * spacing).abs() > spacing / 2.0 {
            return None;
        }
        let bin = bin as usize;
        (bin < self.num_bins()).then_some(bin)
    }
}

/// `wᴴd` for one bin.
pub fn response(weights: &[Complex64], steering: &[Complex64]) -> Complex64 {
    weights
        .iter()
        .zip(steering)
        .map(|(w, d)| w.conj() * d)
        .sum()
}

/// MVDR weights for a single covariance matrix and steering vector.
pub fn mvdr_weights_for_bin(cov: &CovarianceMatrix, steering: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = cov.dim();
    if steering.len() != m {
        return Err(ArrayError::DimensionMismatch {
            expected: m,
            got: steering.len(),
        });
    }
    let condition = condition_number(&cov.matrix);
    if !(condition.is_finite() && condition <= MAX_CONDITION_NUMBER) {
        return Err(ArrayError::SingularCovariance {
            bin: cov.bin,
            condition,
        });
    }
    let chol = cov
        .matrix
        .clone()
        .cholesky()
        .ok_or(ArrayError::SingularCovariance {
            bin: cov.bin,
            condition,
        })?;
    let d = DVector::from_column_slice(steering);
    let r_inv_d = chol.solve(&d);
    let denom: Complex64 = d.iter().zip(r_inv_d.iter()).map(|(a, b)| a.conj() * b).sum();
    Ok(r_inv_d.iter().map(|v| v / denom).collect())
}

/// Weights for every bin; `steering[b]` must correspond to `covariances[b]`.
pub fn mvdr_weights(
    covariances: &[CovarianceMatrix],
    steering: &[SteeringVector],
) -> Result<BeamformerWeights> {
    if covariances.len() != steering.len() {
        return Err(ArrayError::DimensionMismatch {
            expected: covariances.len(),
            got: steering.len(),
        });
    }
    let weights_per_bin = covariances
        .par_iter()
        .zip(steering.par_iter())
        .map(|(cov, d)| mvdr_weights_for_bin(cov, &d.elements))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamformerWeights {
        azimuth_deg: steering.first().map_or(0.0, |d| d.azimuth_deg),
        bin_freqs_hz: steering.iter().map(|d| d.freq_hz).collect(),
        weights_per_bin,
    })
}

/// Ratio of extreme eigenvalues of a Hermitian matrix; infinite when the
/// smallest is not positive.
pub fn condition_number(matrix: &DMatrix<Complex64>) -> f64 {
    let eig = matrix.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{steering_vector, uma8_geometry};

    fn diag(bin: usize, v: f64) -> CovarianceMatrix {
        CovarianceMatrix {
            bin,
            matrix: DMatrix::identity(7, 7) * Complex64::new(v, 0.0),
        }
    }

    #[test]
    fn identity_covariance_gives_delay_and_sum() {
        let g = uma8_geometry();
        let d = steering_vector(&g, 135.0, 1000.0, 343.0);
        let w = mvdr_weights_for_bin(&diag(0, 1.0), &d.elements).unwrap();
        for (wi, di) in w.iter().zip(&d.elements) {
            assert!((wi - di / 7.0).norm() < 1e-12);
        }
    }

    #[test]
    fn scaled_identity_is_scale_invariant() {
        let g = uma8_geometry();
        let d = steering_vector(&g, 10.0, 3000.0, 343.0);
        let w1 = mvdr_weights_for_bin(&diag(0, 1.0), &d.elements).unwrap();
        for sigma2 in [1e-6, 0.3, 42.0, 1e5] {
            let w = mvdr_weights_for_bin(&diag(0, sigma2), &d.elements).unwrap();
            for (a, b) in w.iter().zip(&w1) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let g = uma8_geometry();
        let d = steering_vector(&g, 0.0, 1000.0, 343.0);
        let v = DVector::from_column_slice(&d.elements);
        let rank_one = CovarianceMatrix {
            bin: 3,
            matrix: &v * v.adjoint(),
        };
        assert!(matches!(
            mvdr_weights_for_bin(&rank_one, &d.elements),
            Err(ArrayError::SingularCovariance { bin: 3, .. })
        ));
    }

    #[test]
    fn steering_length_must_match() {
        let d = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(
            mvdr_weights_for_bin(&diag(0, 1.0), &d),
            Err(ArrayError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bin_lookup() {
        let w = BeamformerWeights::uniform(
            0.0,
            (0..257).map(|b| b as f64 * 31.25).collect(),
            vec![Complex64::new(1.0, 0.0)],
        );
        assert_eq!(w.bin_for_frequency(1000.0), Some(32));
        assert_eq!(w.bin_for_frequency(2000.0), Some(64));
        assert_eq!(w.bin_for_frequency(9000.0), None);
        assert_eq!(w.bin_for_frequency(-40.0), None);
    }
}
