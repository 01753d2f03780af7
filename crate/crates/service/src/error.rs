use std::io;

use axum::http::StatusCode;
use beamrecall_core::array::ArrayError;
use beamrecall_core::audio::AudioError;
use beamrecall_core::index::IndexError;
use beamrecall_core::recall::{RecallError, StageError};
use beamrecall_core::scene::SceneError;
use beamrecall_core::transcribe::TranscribeError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ingest steps, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestStage {
    Decode,
    Doa,
    Beamform,
    Transcribe,
    Index,
    Persist,
}

impl IngestStage {
    pub fn as_str(self) -> &'static str {
        match self {
            IngestStage::Decode => "decode",
            IngestStage::Doa => "doa",
            IngestStage::Beamform => "beamform",
            IngestStage::Transcribe => "transcribe",
            IngestStage::Index => "index",
            IngestStage::Persist => "persist",
        }
    }
}

/// What went wrong inside one ingest stage.
#[derive(Debug, Error)]
pub enum IngestFailure {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Transcribe(#[from] TranscribeError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

impl IngestFailure {
    fn code(&self) -> &'static str {
        match self {
            IngestFailure::Audio(AudioError::MalformedWav(_) | AudioError::UnsupportedEncoding(_)) => "invalid_wav",
            IngestFailure::Audio(_) => "invalid_audio",
            IngestFailure::Array(ArrayError::ChannelMismatch { .. }) => "channel_mismatch",
            IngestFailure::Array(ArrayError::SilentInput { .. }) => "silent_input",
            IngestFailure::Array(
                ArrayError::NoAzimuths
                | ArrayError::DuplicateLabel(_)
                | ArrayError::AzimuthsTooClose { .. }
                | ArrayError::InvalidConfig(_),
            ) => "invalid_plan",
            IngestFailure::Array(_) => "beamforming_failed",
            IngestFailure::Transcribe(TranscribeError::FixtureMissing(_)) => "fixture_missing",
            IngestFailure::Transcribe(TranscribeError::BackendUnreachable { .. }) => "backend_unreachable",
            IngestFailure::Transcribe(TranscribeError::MalformedResponse(_)) => "malformed_response",
            IngestFailure::Transcribe(_) => "transcription_failed",
            IngestFailure::Index(IndexError::ProviderUnreachable { .. }) => "backend_unreachable",
            IngestFailure::Index(IndexError::MalformedResponse(_)) => "malformed_response",
            IngestFailure::Index(IndexError::DimensionMismatch { .. }) => "dimension_mismatch",
            IngestFailure::Index(_) => "index_error",
            IngestFailure::Io(_) => "io_error",
            IngestFailure::Other(_) => "ingest_failed",
        }
    }

    fn is_user_error(&self) -> bool {
        matches!(
            self.code(),
            "invalid_wav" | "invalid_audio" | "channel_mismatch" | "silent_input" | "invalid_plan" | "fixture_missing"
        )
    }

    fn is_backend_error(&self) -> bool {
        matches!(self.code(), "backend_unreachable" | "malformed_response" | "dimension_mismatch")
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("session has no stream labelled {0:?}")]
    UnknownDirection(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("upload exceeds {0} MB")]
    TooLarge(usize),
    #[error("method not allowed")]
    MethodNotAllowed,
    #[error("missing or invalid API token")]
    Unauthorized,
    #[error("session {0} is already being ingested")]
    Busy(String),
    #[error("{stage}: {source}", stage = .stage.as_str())]
    Ingest {
        stage: IngestStage,
        #[source]
        source: IngestFailure,
    },
    #[error(transparent)]
    Query(#[from] StageError),
    #[error("audio: {0}")]
    Audio(#[from] AudioError),
    #[error("beam pattern: {0}")]
    Beampattern(#[source] ArrayError),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("corrupt session {id}: {detail}")]
    CorruptSession { id: String, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// JSON body returned with every 4xx/5xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub stage: String,
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn ingest(stage: IngestStage, source: impl Into<IngestFailure>) -> Self {
        Self::Ingest {
            stage,
            source: source.into(),
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            ServiceError::BadConfig(_) | ServiceError::BindFailure { .. } => "config",
            ServiceError::SessionNotFound(_) | ServiceError::CorruptSession { .. } | ServiceError::Busy(_) => "session",
            ServiceError::UnknownDirection(_) | ServiceError::Audio(_) => "audio",
            ServiceError::BadRequest(_) | ServiceError::TooLarge(_) | ServiceError::MethodNotAllowed => "request",
            ServiceError::Unauthorized => "auth",
            ServiceError::Ingest { stage, .. } => stage.as_str(),
            ServiceError::Query(e) => e.stage.as_str(),
            ServiceError::Beampattern(_) => "beampattern",
            ServiceError::Scene(_) => "scene",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadConfig(_) => "bad_config",
            ServiceError::BindFailure { .. } => "bind_failure",
            ServiceError::SessionNotFound(_) => "session_not_found",
            ServiceError::UnknownDirection(_) => "unknown_direction",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::TooLarge(_) => "payload_too_large",
            ServiceError::MethodNotAllowed => "method_not_allowed",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::Busy(_) => "ingest_in_progress",
            ServiceError::Ingest { source, .. } => source.code(),
            ServiceError::Query(e) => e.source.code(),
            ServiceError::Audio(AudioError::EmptyInterval { .. }) => "empty_interval",
            ServiceError::Audio(_) => "audio_error",
            ServiceError::Beampattern(ArrayError::BinOutOfRange { .. }) => "frequency_out_of_range",
            ServiceError::Beampattern(_) => "beampattern_error",
            ServiceError::Scene(_) => "invalid_scene",
            ServiceError::CorruptSession { .. } => "corrupt_session",
            ServiceError::Io(_) => "io_error",
        }
    }

    /// True when the caller can fix the problem (CLI exit code 1).
    pub fn is_user_error(&self) -> bool {
        match self {
            ServiceError::BadConfig(_)
            | ServiceError::SessionNotFound(_)
            | ServiceError::UnknownDirection(_)
            | ServiceError::BadRequest(_)
            | ServiceError::TooLarge(_)
            | ServiceError::MethodNotAllowed
            | ServiceError::Unauthorized
            | ServiceError::Busy(_)
            | ServiceError::Scene(_)
            | ServiceError::Audio(AudioError::EmptyInterval { .. }) => true,
            ServiceError::Beampattern(ArrayError::BinOutOfRange { .. }) => true,
            ServiceError::Ingest { source, .. } => source.is_user_error(),
            ServiceError::Query(e) => e.source.is_user_error(),
            _ => false,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::SessionNotFound(_) | ServiceError::UnknownDirection(_) => StatusCode::NOT_FOUND,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ServiceError::Busy(_) => StatusCode::CONFLICT,
            ServiceError::Query(e) if matches!(e.source, RecallError::NoTopic | RecallError::EmptyAttended { .. }) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::Query(e)
                if matches!(e.source, RecallError::BackendUnreachable { .. } | RecallError::MalformedResponse(_)) =>
            {
                StatusCode::BAD_GATEWAY
            }
            ServiceError::Ingest { source, .. } if source.is_backend_error() => StatusCode::BAD_GATEWAY,
            e if e.is_user_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            stage: self.stage().to_string(),
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}
