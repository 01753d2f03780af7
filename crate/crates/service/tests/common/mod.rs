#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use beamrecall::app::{App, QueryRequest};
use beamrecall::config::ServiceConfig;
use beamrecall::session::IngestPlan;
use beamrecall_core::audio::{write_wav, BitDepth};
use beamrecall_core::transcribe::AsrBackend;
use beamrecall_testkit::fixtures::{recall_mixture, recall_plan, recall_transcripts_dir, RECALL_QUERY};
use serde_json::{json, Value};

/// (query, recall overrides) pairs answered identically by CLI and API.
pub fn parity_queries() -> Vec<(&'static str, Value)> {
    vec![
        (RECALL_QUERY, json!({})),
        ("What did I miss during the talk about interest rates?", json!({})),
        ("Anything on gold prices?", json!({})),
        ("What did I miss while I was listening to the AI safety research?", json!({})),
        ("Anything regarding credit card balances?", json!({ "min_overlap_s": 2.0 })),
        ("What was said about the oil futures?", json!({ "top_k": 3 })),
        ("What did I miss about gold?", json!({ "window_k": 0 })),
        ("Anything on the dollar and the euro?", json!({ "window_k": 1 })),
        (
            "What did I miss during the discussion about AI models?",
            json!({ "relevance_mode": "threshold", "relevance_threshold": 0.1 }),
        ),
        (
            "Tell me about the studio roof.",
            json!({ "relevance_mode": "threshold", "relevance_threshold": 0.05 }),
        ),
    ]
}

pub fn test_config(root: &Path) -> ServiceConfig {
    ServiceConfig {
        sessions_root: root.join("sessions"),
        listen: "127.0.0.1:0".into(),
        asr: AsrBackend::FixtureFile {
            dir: recall_transcripts_dir(),
        },
        ..ServiceConfig::default()
    }
}

/// Writes `config` as TOML for the CLI to load.
pub fn write_config(config: &ServiceConfig, path: &Path) {
    std::fs::write(path, toml::to_string(config).expect("config serializes")).unwrap();
}

pub fn write_recall_wav(path: &Path) -> Vec<u8> {
    write_wav(&recall_mixture(), path, BitDepth::Float32).unwrap();
    std::fs::read(path).unwrap()
}

pub fn recall_ingest_plan() -> IngestPlan {
    IngestPlan::explicit(recall_plan())
}

/// A temp directory with config, the recall mixture and its ingested session.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: ServiceConfig,
    pub config_path: PathBuf,
    pub wav_path: PathBuf,
    pub wav: Vec<u8>,
    pub session_id: String,
}

impl Fixture {
    pub fn ingested() -> Self {
        let dir = tempfile::Builder::new()
            .prefix("fixture-")
            .tempdir_in(env!("CARGO_TARGET_TMPDIR"))
            .unwrap();
        let config = test_config(dir.path());
        let config_path = dir.path().join("beamrecall.toml");
        write_config(&config, &config_path);
        let wav_path = dir.path().join("mixture.wav");
        let wav = write_recall_wav(&wav_path);
        let app = App::new(config.clone()).unwrap();
        let session_id = app.ingest(&wav, &recall_ingest_plan()).unwrap().session_id;
        Self {
            dir,
            config,
            config_path,
            wav_path,
            wav,
            session_id,
        }
    }

    pub fn app(&self) -> Arc<App> {
        App::shared(self.config.clone()).unwrap()
    }
}

/// The API on an ephemeral port, served from its own runtime thread.
pub struct TestServer {
    pub base: String,
    stop: Option<mpsc::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(config: ServiceConfig) -> Self {
        let app = App::shared(config).unwrap();
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, stopped) = mpsc::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                let shutdown = async move {
                    let _ = tokio::task::spawn_blocking(move || stopped.recv()).await;
                };
                beamrecall::api::serve(app, listener, shutdown).await.unwrap();
            });
        });
        Self {
            base,
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        drop(self.stop.take());
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(120))
        .build()
        .unwrap()
}

pub fn cli(bin: &str, config_path: &Path, args: &[&str]) -> std::process::Output {
    Command::new(bin)
        .arg("--config")
        .arg(config_path)
        .args(args)
        .output()
        .expect("binary runs")
}

fn set_args(overrides: &Value) -> Vec<String> {
    overrides
        .as_object()
        .into_iter()
        .flatten()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect()
}

/// Runs every parity query through the binary and the API and compares bytes.
pub fn cli_api_parity(bin: &str) -> Result<String, String> {
    let fx = Fixture::ingested();
    let server = TestServer::start(fx.config.clone());
    let http = client();
    let queries = parity_queries();
    for (i, (query, overrides)) in queries.iter().enumerate() {
        let sets = set_args(overrides);
        let mut args = vec!["query", "--session", &fx.session_id, "--q", query];
        for s in &sets {
            args.extend(["--set", s.as_str()]);
        }
        let out = cli(bin, &fx.config_path, &args);
        if !out.status.success() {
            return Err(format!(
                "query {i} failed on the CLI: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        let request = QueryRequest {
            query: query.to_string(),
            config: overrides.as_object().cloned().unwrap_or_default(),
        };
        let resp = http
            .post(server.url(&format!("/sessions/{}/query", fx.session_id)))
            .json(&request)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("query {i} failed on the API ({status}): {}", String::from_utf8_lossy(&body)));
        }
        let mut api = body.to_vec();
        api.push(b'\n');
        if api != out.stdout {
            return Err(format!("query {i} ({query:?}): CLI and API bodies differ"));
        }
    }
    Ok(format!("{} queries byte-identical", queries.len()))
}
