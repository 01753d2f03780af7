//! Microphone-array processing: geometry, steering, spatial covariance,
//! direction-of-arrival estimation and MVDR beamforming.

mod beamform;
mod covariance;
mod doa;
mod geometry;
mod mvdr;
mod steering;

pub use beamform::{
    apply_beamformer, beam_pattern, beam_pattern_csv, separate_streams, separate_streams_detailed,
    validate_plan, DirectionalStream, SeparatedStream, SeparationConfig, StreamPlan,
};
pub use covariance::{estimate_covariance, CovarianceMatrix, DEFAULT_LOADING};
pub use doa::{pick_peaks, srp_phat, DoaConfig, DoaEstimate, DoaPeak};
pub use geometry::{uma8_geometry, ArrayGeometry, UMA8_RADIUS_M};
pub use mvdr::{
    condition_number, mvdr_weights, mvdr_weights_for_bin, response, BeamformerWeights, MAX_CONDITION_NUMBER,
};
pub use steering::{
    angular_distance, arrival_advances, look_direction, normalize_azimuth, steering_per_bin, steering_vector,
    SteeringVector, DEFAULT_SPEED_OF_SOUND,
};

use thiserror::Error;

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("STFT tensor has no frames")]
    EmptyTensor,
    #[error("input is silent (mean in-band energy {energy:e})")]
    SilentInput { energy: f64 },
    #[error("covariance in bin {bin} is singular (condition number {condition:e})")]
    SingularCovariance { bin: usize, condition: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("audio has {got} channels but the array has {expected} mics")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("{freq_hz} Hz does not map to a weight bin")]
    BinOutOfRange { freq_hz: f64 },
    #[error("duplicate stream label {0:?}")]
    DuplicateLabel(String),
    #[error("streams {a:?} and {b:?} are {separation_deg:.1}° apart (minimum {min_deg}°)")]
    AzimuthsTooClose {
        a: String,
        b: String,
        separation_deg: f64,
        min_deg: f64,
    },
    #[error("at least one look direction is required")]
    NoAzimuths,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = ArrayError> = std::result::Result<T, E>;
