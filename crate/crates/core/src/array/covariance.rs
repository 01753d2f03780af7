use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{ArrayError, Result};
use crate::audio::StftTensor;

pub const DEFAULT_LOADING: f64 = 1e-3;

/// Spatial covariance of the array snapshots in one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub bin: usize,
    pub matrix: DMatrix<Complex64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn identity(bin: usize, m: usize) -> Self {
        Self {
            bin,
            matrix: DMatrix::identity(m, m),
        }
    }
}

/// Per-bin sample covariance averaged over all frames, with diagonal loading
/// `loading_factor * tr(R) / M`.
///
/// A bin with no energy at all (trace exactly zero) has no spatial
/// information; it is replaced by the identity so downstream weights reduce
/// to delay-and-sum there.
pub fn estimate_covariance(stft: &StftTensor, loading_factor: f64) -> Result<Vec<CovarianceMatrix>> {
    let (m, frames, bins) = stft.data().dim();
    if frames == 0 {
        return Err(ArrayError::EmptyTensor);
    }
    let data = stft.data();
    Ok((0..bins)
        .into_par_iter()
        .map(|bin| {
            let mut r = DMatrix::<Complex64>::zeros(m, m);
            let mut x = vec![Complex64::default(); m];
            for f in 0..frames {
                for (ch, slot) in x.iter_mut().enumerate() {
                    *slot = data[[ch, f, bin]];
                }
                for i in 0..m {
                    for j in i..m {
                        r[(i, j)] += x[i] * x[j].conj();
                    }
                }
            }
            let inv_frames = 1.0 / frames as f64;
            for i in 0..m {
                r[(i, i)] = Complex64::new(r[(i, i)].re * inv_frames, 0.0);
                for j in i + 1..m {
                    r[(i, j)] *= inv_frames;
                    r[(j, i)] = r[(i, j)].conj();
                }
            }
            let mut cov = CovarianceMatrix { bin, matrix: r };
            let trace = cov.trace();
            if trace == 0.0 {
                return CovarianceMatrix::identity(bin, m);
            }
            let load = loading_factor * trace / m as f64;
            for i in 0..m {
                cov.matrix[(i, i)] += load;
            }
            cov
        })
        .collect())
}
