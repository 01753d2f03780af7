//! Separation of simultaneous conversations captured by a microphone array,
//! and retrieval of what was said in the conversations a listener missed.
//!
//! The crate is organized along the processing chain:
//!
//! - [`audio`]: WAV I/O, STFT/ISTFT and interval slicing
//! - [`array`]: array geometry, steering, DOA estimation and MVDR beamforming
//! - [`scene`]: free-field scene simulation and quality metrics (SI-SDR, STOI)
//! - [`transcribe`]: ASR backends, sentence splitting and chunking
//! - [`index`]: embeddings, the exact cosine index and the chunk metadata store
//! - [`remote`]: the retrying HTTP client shared by the remote backends
//! - [`recall`]: the "what did I miss" query pipeline

pub mod audio;
pub mod array;
pub mod scene;
pub mod transcribe;
pub mod index;
pub mod remote;
pub mod recall;
