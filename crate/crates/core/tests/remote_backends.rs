use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Multipart, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use beamrecall_core::array::DirectionalStream;
use beamrecall_core::audio::read_wav_bytes;
use beamrecall_core::index::{Embedder, EmbeddingProvider, IndexError};
use beamrecall_core::recall::{Llm, LlmBackend, RecallError};
use beamrecall_core::remote::{Endpoint, RetryPolicy};
use beamrecall_core::transcribe::{AsrBackend, TranscribeError, Transcriber};
use serde_json::{json, Value};

#[derive(Default)]
struct Seen {
    hits: AtomicUsize,
    auth: Mutex<Vec<String>>,
    bodies: Mutex<Vec<Value>>,
}

/// Serves `router` on an ephemeral port from a background runtime.
fn serve(router: Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{addr}")
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        initial_backoff_ms: 5,
        multiplier: 2.0,
    }
}

fn note(seen: &Seen, headers: &HeaderMap) {
    seen.hits.fetch_add(1, Ordering::SeqCst);
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    seen.auth.lock().unwrap().push(auth);
}

fn stream() -> DirectionalStream {
    DirectionalStream {
        label: "az045".into(),
        azimuth_deg: 45.0,
        samples: (0..1600).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(),
        sample_rate_hz: 16_000,
    }
}

async fn asr_ok(State(seen): State<Arc<Seen>>, headers: HeaderMap, mut form: Multipart) -> Json<Value> {
    note(&seen, &headers);
    let mut fields = serde_json::Map::new();
    while let Some(field) = form.next_field().await.unwrap() {
        let name = field.name().unwrap().to_string();
        let bytes = field.bytes().await.unwrap();
        let value = if name == "file" {
            let audio = read_wav_bytes(&bytes).unwrap();
            json!({ "channels": audio.num_channels(), "samples": audio.num_samples(), "rate": audio.sample_rate_hz() })
        } else {
            json!(String::from_utf8(bytes.to_vec()).unwrap())
        };
        fields.insert(name, value);
    }
    seen.bodies.lock().unwrap().push(Value::Object(fields));
    Json(json!({
        "text": "ignored",
        "segments": [
            { "start": 2.0, "end": 3.0, "text": "  Second part. " },
            { "start": 0.0, "end": 1.5, "text": "First part." }
        ]
    }))
}

#[test]
fn asr_uploads_wav_and_sorts_segments() {
    let seen = Arc::new(Seen::default());
    let url = serve(Router::new().route("/asr", post(asr_ok)).with_state(seen.clone()));
    let backend = AsrBackend::RemoteHttp {
        endpoint: Endpoint::new(format!("{url}/asr")).with_token("s3cret"),
        model: Some("whisper-1".into()),
        max_in_flight: 2,
    };
    let segments = Transcriber::new(backend).unwrap().transcribe(&stream()).unwrap();
    assert_eq!(segments.len(), 2);
    assert_eq!(segments[0].text, "First part.");
    assert_eq!(segments[1].text, "Second part.");

    assert_eq!(seen.auth.lock().unwrap().as_slice(), ["Bearer s3cret"]);
    let body = seen.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["file"], json!({ "channels": 1, "samples": 1600, "rate": 16000 }));
    assert_eq!(body["response_format"], "verbose_json");
    assert_eq!(body["model"], "whisper-1");
}

async fn always_500(State(seen): State<Arc<Seen>>, headers: HeaderMap) -> (StatusCode, &'static str) {
    note(&seen, &headers);
    (StatusCode::INTERNAL_SERVER_ERROR, "boom")
}

async fn always_400(State(seen): State<Arc<Seen>>, headers: HeaderMap) -> (StatusCode, &'static str) {
    note(&seen, &headers);
    (StatusCode::BAD_REQUEST, "bad input")
}

#[test]
fn asr_server_errors_are_retried_then_reported() {
    let seen = Arc::new(Seen::default());
    let url = serve(
        Router::new()
            .route("/asr", post(always_500))
            .route("/bad", post(always_400))
            .with_state(seen.clone()),
    );
    let backend = |path: &str| AsrBackend::RemoteHttp {
        endpoint: Endpoint::new(format!("{url}{path}")).with_retry(fast_retry()),
        model: None,
        max_in_flight: 1,
    };
    let err = Transcriber::new(backend("/asr")).unwrap().transcribe(&stream()).unwrap_err();
    match err {
        TranscribeError::BackendUnreachable { attempts, detail } => {
            assert_eq!(attempts, 3);
            assert!(detail.contains("500"), "{detail}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.hits.load(Ordering::SeqCst), 3);

    let err = Transcriber::new(backend("/bad")).unwrap().transcribe(&stream()).unwrap_err();
    assert!(matches!(err, TranscribeError::BackendUnreachable { attempts: 1, .. }));
    assert_eq!(seen.hits.load(Ordering::SeqCst), 4);
}

async fn asr_garbage(State(seen): State<Arc<Seen>>, headers: HeaderMap) -> Json<Value> {
    note(&seen, &headers);
    Json(json!({ "text": "no segments here" }))
}

#[test]
fn asr_malformed_body() {
    let seen = Arc::new(Seen::default());
    let url = serve(Router::new().route("/asr", post(asr_garbage)).with_state(seen));
    let backend = AsrBackend::RemoteHttp {
        endpoint: Endpoint::new(format!("{url}/asr")),
        model: None,
        max_in_flight: 1,
    };
    let err = Transcriber::new(backend).unwrap().transcribe(&stream()).unwrap_err();
    assert!(matches!(err, TranscribeError::MalformedResponse(_)));
}

async fn embed_handler(State(seen): State<Arc<Seen>>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    note(&seen, &headers);
    seen.bodies.lock().unwrap().push(body.clone());
    let text = body["input"][0].as_str().unwrap_or("");
    let dim = if text.contains("wide") { 768 } else { 4 };
    let v: Vec<f64> = (0..dim).map(|i| (i + text.len()) as f64).collect();
    Json(json!({ "data": [{ "embedding": v }] }))
}

#[test]
fn remote_embeddings_check_dimension() {
    let seen = Arc::new(Seen::default());
    let url = serve(Router::new().route("/embed", post(embed_handler)).with_state(seen.clone()));
    let embedder = Embedder::new(EmbeddingProvider::RemoteHttp {
        endpoint: Endpoint::new(format!("{url}/embed")),
        model: Some("mini".into()),
        dim: 4,
    })
    .unwrap();
    let v = embedder.embed("abc").unwrap();
    assert_eq!(v.dim(), 4);
    let norm: f64 = v.values().iter().map(|x| f64::from(*x).powi(2)).sum();
    assert!((norm - 1.0).abs() < 1e-6);
    assert_eq!(seen.bodies.lock().unwrap()[0], json!({ "input": ["abc"], "model": "mini" }));

    assert!(matches!(
        embedder.embed("wide text"),
        Err(IndexError::DimensionMismatch { expected: 4, got: 768 })
    ));
    assert!(matches!(embedder.embed("   "), Err(IndexError::NoTokens)));
}

#[test]
fn unreachable_embedding_provider() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let embedder = Embedder::new(EmbeddingProvider::RemoteHttp {
        endpoint: Endpoint::new(format!("http://127.0.0.1:{port}/embed")).with_retry(fast_retry()),
        model: None,
        dim: 4,
    })
    .unwrap();
    assert!(matches!(
        embedder.embed("abc"),
        Err(IndexError::ProviderUnreachable { attempts: 3, .. })
    ));
}

async fn chat_handler(State(seen): State<Arc<Seen>>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    note(&seen, &headers);
    seen.bodies.lock().unwrap().push(body.clone());
    let system = body["messages"][0]["content"].as_str().unwrap_or("");
    let user = body["messages"][1]["content"].as_str().unwrap_or("");
    let answer = if system.contains("extract the topic") {
        if user.contains("nothing") { "" } else { "\"artificial intelligence research and its many future directions of work.\"" }
    } else if system.contains("yes or no") {
        if user.contains("model") { "Yes, it is." } else { "no" }
    } else {
        "- While you were listening to AI (left), you missed (right): markets."
    };
    Json(json!({ "choices": [{ "message": { "role": "assistant", "content": answer } }] }))
}

#[test]
fn remote_chat_topic_relevance_summary() {
    let seen = Arc::new(Seen::default());
    let url = serve(Router::new().route("/chat", post(chat_handler)).with_state(seen.clone()));
    let llm = Llm::new(LlmBackend::RemoteChat {
        endpoint: Endpoint::new(format!("{url}/chat")),
        model: "m1".into(),
    })
    .unwrap();
    assert!(!llm.is_stub());

    assert_eq!(
        llm.extract_topic("What did I miss?").unwrap(),
        "artificial intelligence research and its many future directions"
    );
    assert!(matches!(llm.extract_topic("nothing here"), Err(RecallError::NoTopic)));
    assert_eq!(llm.judge_relevance("AI", "a new model").unwrap(), Some(true));
    assert_eq!(llm.judge_relevance("AI", "bread").unwrap(), Some(false));
    assert!(llm.summarize("x").unwrap().unwrap().contains("(right)"));

    let body = seen.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "m1");
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["messages"][0]["role"], "system");
}

async fn chat_garbage(State(seen): State<Arc<Seen>>, headers: HeaderMap) -> Json<Value> {
    note(&seen, &headers);
    Json(json!({ "choices": [] }))
}

#[test]
fn remote_chat_failures() {
    let seen = Arc::new(Seen::default());
    let url = serve(
        Router::new()
            .route("/chat", post(chat_garbage))
            .route("/down", post(always_500))
            .with_state(seen),
    );
    let llm = |path: &str| {
        Llm::new(LlmBackend::RemoteChat {
            endpoint: Endpoint::new(format!("{url}{path}")).with_retry(fast_retry()),
            model: "m".into(),
        })
        .unwrap()
    };
    assert!(matches!(llm("/chat").extract_topic("q"), Err(RecallError::MalformedResponse(_))));
    assert!(matches!(
        llm("/down").summarize("q"),
        Err(RecallError::BackendUnreachable { attempts: 3, .. })
    ));
}
