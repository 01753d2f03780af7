use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use beamrecall_core::array::{ArrayGeometry, DoaConfig, SeparationConfig};
use beamrecall_core::index::EmbeddingProvider;
use beamrecall_core::recall::{LlmBackend, RecallConfig};
use beamrecall_core::remote::Endpoint;
use beamrecall_core::transcribe::{AsrBackend, DEFAULT_MAX_SENTENCES};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const ENV_ASR_TOKEN: &str = "BEAMRECALL_ASR_TOKEN";
pub const ENV_EMBED_TOKEN: &str = "BEAMRECALL_EMBED_TOKEN";
pub const ENV_LLM_TOKEN: &str = "BEAMRECALL_LLM_TOKEN";
pub const ENV_API_TOKEN: &str = "BEAMRECALL_API_TOKEN";

/// Everything the service and CLI need; loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub sessions_root: PathBuf,
    /// Directory served at `/`; the bundled page is used when unset.
    pub static_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub api_token: Option<String>,
    pub max_upload_mb: usize,
    pub geometry: String,
    pub max_sentences: usize,
    pub asr: AsrBackend,
    pub embedding: EmbeddingProvider,
    pub llm: LlmBackend,
    pub recall: RecallConfig,
    pub separation: SeparationConfig,
    pub doa: DoaConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            sessions_root: PathBuf::from("sessions"),
            static_dir: None,
            api_token: None,
            max_upload_mb: 512,
            geometry: "uma8".into(),
            max_sentences: DEFAULT_MAX_SENTENCES,
            asr: AsrBackend::FixtureFile {
                dir: PathBuf::from("transcripts"),
            },
            embedding: EmbeddingProvider::default(),
            llm: LlmBackend::default(),
            recall: RecallConfig::default(),
            separation: SeparationConfig::default(),
            doa: DoaConfig::default(),
        }
    }
}

fn endpoint_of_asr(b: &mut AsrBackend) -> Option<&mut Endpoint> {
    match b {
        AsrBackend::RemoteHttp { endpoint, .. } => Some(endpoint),
        AsrBackend::FixtureFile { .. } => None,
    }
}

fn endpoint_of_embedding(p: &mut EmbeddingProvider) -> Option<&mut Endpoint> {
    match p {
        EmbeddingProvider::RemoteHttp { endpoint, .. } => Some(endpoint),
        EmbeddingProvider::Hash { .. } => None,
    }
}

fn endpoint_of_llm(b: &mut LlmBackend) -> Option<&mut Endpoint> {
    match b {
        LlmBackend::RemoteChat { endpoint, .. } => Some(endpoint),
        LlmBackend::DeterministicStub => None,
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ServiceError::BadConfig(e.to_string()))
    }

    /// Reads `path`, resolves relative paths against its directory, applies
    /// environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::BadConfig(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    /// Defaults plus environment overrides, for runs without a config file.
    pub fn from_env() -> Result<Self> {
        let mut config = Self::default();
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.sessions_root);
        if let Some(dir) = &mut self.static_dir {
            fix(dir);
        }
        if let AsrBackend::FixtureFile { dir } = &mut self.asr {
            fix(dir);
        }
    }

    /// Secrets from the environment win over the file.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let set = |ep: Option<&mut Endpoint>, key: &str| {
            if let (Some(ep), Some(token)) = (ep, lookup(key)) {
                ep.token = Some(token);
            }
        };
        set(endpoint_of_asr(&mut self.asr), ENV_ASR_TOKEN);
        set(endpoint_of_embedding(&mut self.embedding), ENV_EMBED_TOKEN);
        set(endpoint_of_llm(&mut self.llm), ENV_LLM_TOKEN);
        if let Some(token) = lookup(ENV_API_TOKEN) {
            self.api_token = Some(token);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ServiceError::BadConfig(m));
        if self.listen.parse::<SocketAddr>().is_err() {
            return bad(format!("listen address {:?} is not host:port", self.listen));
        }
        if ArrayGeometry::preset(&self.geometry).is_none() {
            return bad(format!("unknown geometry {:?}", self.geometry));
        }
        if self.max_sentences == 0 {
            return bad("max_sentences must be at least 1".into());
        }
        if self.max_upload_mb == 0 {
            return bad("max_upload_mb must be at least 1".into());
        }
        if let AsrBackend::RemoteHttp { max_in_flight: 0, .. } = self.asr {
            return bad("asr.max_in_flight must be at least 1".into());
        }
        if let EmbeddingProvider::Hash { dim: 0 } | EmbeddingProvider::RemoteHttp { dim: 0, .. } = self.embedding {
            return bad("embedding.dim must be positive".into());
        }
        self.separation
            .stft
            .validate()
            .map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        self.recall.validate().map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        if self.api_token.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return bad("api_token must not be empty".into());
        }
        Ok(())
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry::preset(&self.geometry).expect("validated geometry")
    }

    pub fn listen_addr(&self) -> Result<SocketAddr> {
        self.listen
            .parse()
            .map_err(|_| ServiceError::BadConfig(format!("listen address {:?} is not host:port", self.listen)))
    }
}
