use beamrecall_core::array::{
    estimate_covariance, mvdr_weights, mvdr_weights_for_bin, response, steering_per_bin, uma8_geometry, ArrayError,
    CovarianceMatrix, DEFAULT_LOADING, DEFAULT_SPEED_OF_SOUND,
};
use beamrecall_core::audio::{stft, StftConfig};
use beamrecall_testkit::criteria::{self, NUM_BINS};
use beamrecall_testkit::fixtures::two_source_scene;
use beamrecall_testkit::oracle::mvdr_oracle;
use nalgebra::DMatrix;
use num_complex::Complex64;

#[test]
fn mvdr_matches_dense_solve() {
    let detail = criteria::mvdr_correctness().unwrap();
    println!("{detail}");
}

#[test]
fn identity_covariance_gives_delay_and_sum() {
    criteria::identity_reduction().unwrap();
}

#[test]
fn estimated_covariance_weights_match_oracle() {
    let scene = two_source_scene(1.0, Some(20.0));
    let tensor = stft(&scene.mixture, StftConfig::default()).unwrap();
    let covs = estimate_covariance(&tensor, DEFAULT_LOADING).unwrap();
    assert_eq!(covs.len(), NUM_BINS);
    let steering = steering_per_bin(&uma8_geometry(), 135.0, NUM_BINS, tensor.bin_frequency(1), DEFAULT_SPEED_OF_SOUND);
    let weights = mvdr_weights(&covs, &steering).unwrap();
    for ((cov, d), w) in covs.iter().zip(&steering).zip(&weights.weights_per_bin) {
        let m = cov.dim();
        let dense: Vec<Vec<Complex64>> = (0..m).map(|i| (0..m).map(|j| cov.matrix[(i, j)]).collect()).collect();
        let expected = mvdr_oracle(&dense, &d.elements);
        let scale = expected.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for (a, b) in w.iter().zip(&expected) {
            assert!((a - b).norm() / scale < 1e-8, "bin {}: {a} vs {b}", cov.bin);
        }
        assert!((response(w, &d.elements) - 1.0).norm() < 1e-9);
    }
}

#[test]
fn singular_covariance_is_rejected() {
    let d = steering_per_bin(&uma8_geometry(), 0.0, 10, 100.0, DEFAULT_SPEED_OF_SOUND)[5].clone();
    let rank_one = DMatrix::from_fn(7, 7, |i, j| d.elements[i] * d.elements[j].conj());
    let cov = CovarianceMatrix { bin: 5, matrix: rank_one };
    assert!(matches!(
        mvdr_weights_for_bin(&cov, &d.elements),
        Err(ArrayError::SingularCovariance { bin: 5, .. })
    ));
    let short = vec![Complex64::new(1.0, 0.0); 3];
    assert!(matches!(
        mvdr_weights_for_bin(&CovarianceMatrix::identity(0, 7), &short),
        Err(ArrayError::DimensionMismatch { expected: 7, got: 3 })
    ));
}
