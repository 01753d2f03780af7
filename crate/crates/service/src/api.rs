use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::{Multipart, MultipartError, MultipartRejection};
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::handler::HandlerWithoutStateExt;
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::app::{App, IngestState, QueryRequest};
use crate::error::{Result, ServiceError};
use crate::schemas;
use crate::session::IngestPlan;

const INDEX_HTML: &str = include_str!("../static/index.html");

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(self.body())).into_response()
    }
}

/// Response to `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub status_url: String,
    pub state: IngestState,
}

async fn blocking<T, F>(f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?
}

fn json_text(body: String) -> Response {
    ([(CONTENT_TYPE, "application/json")], body).into_response()
}

async fn list_sessions(State(app): State<Arc<App>>) -> Result<Response> {
    let list = blocking(move || app.store.list()).await?;
    Ok(Json(list).into_response())
}

async fn create_session(
    State(app): State<Arc<App>>,
    form: std::result::Result<Multipart, MultipartRejection>,
) -> Result<Response> {
    let bad = |m: String| ServiceError::BadRequest(m);
    let limit = app.config.max_upload_mb;
    let field_error = |e: MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ServiceError::TooLarge(limit)
        } else {
            ServiceError::BadRequest(e.body_text())
        }
    };
    let mut form = form.map_err(|e| bad(e.body_text()))?;
    let (mut wav, mut plan) = (None, None);
    while let Some(field) = form.next_field().await.map_err(field_error)? {
        match field.name() {
            Some("audio" | "file") => wav = Some(field.bytes().await.map_err(field_error)?),
            Some("plan") => plan = Some(field.text().await.map_err(field_error)?),
            _ => {}
        }
    }
    let wav = wav.ok_or_else(|| bad("multipart field \"audio\" is required".into()))?;
    let plan = IngestPlan::from_json(&plan.ok_or_else(|| bad("multipart field \"plan\" is required".into()))?)?;

    let id = app.session_id_for(&wav, &plan);
    let status_url = format!("/sessions/{id}/status");
    let created = |state| CreatedSession {
        session_id: id.clone(),
        status_url: status_url.clone(),
        state,
    };
    if app.store.exists(&id) {
        return Ok((StatusCode::OK, Json(created(IngestState::Ready))).into_response());
    }

    let checker = app.clone();
    let upload = wav.clone();
    blocking(move || checker.decode(&upload).map(drop)).await?;

    if app.begin_background_ingest(&id) {
        let worker = app.clone();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = worker.ingest_tracked(&wav, &plan) {
                tracing::warn!(error = %e, "background ingest failed");
            }
        });
    }
    Ok((StatusCode::ACCEPTED, Json(created(IngestState::Running))).into_response())
}

async fn get_manifest(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Response> {
    let session = blocking(move || app.open(&id)).await?;
    Ok(Json(&session.manifest).into_response())
}

async fn get_status(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(app.status(&id)?).into_response())
}

async fn post_query(State(app): State<Arc<App>>, Path(id): Path<String>, body: Bytes) -> Result<Response> {
    let request: QueryRequest =
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("query body: {e}")))?;
    let result = blocking(move || app.query(&id, &request)).await?;
    Ok(json_text(result.to_json_pretty()))
}

type Params = std::result::Result<Query<HashMap<String, String>>, QueryRejection>;

fn params(p: Params) -> Result<HashMap<String, String>> {
    p.map(|Query(m)| m).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn number(params: &HashMap<String, String>, key: &str) -> Result<Option<f64>> {
    params
        .get(key)
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ServiceError::BadRequest(format!("{key}={v:?} is not a number")))
        })
        .transpose()
}

fn required(params: &HashMap<String, String>, key: &str) -> Result<f64> {
    number(params, key)?.ok_or_else(|| ServiceError::BadRequest(format!("query parameter {key} is required")))
}

async fn get_audio(State(app): State<Arc<App>>, Path(id): Path<String>, p: Params) -> Result<Response> {
    let p = params(p)?;
    let direction = p
        .get("direction")
        .cloned()
        .ok_or_else(|| ServiceError::BadRequest("query parameter direction is required".into()))?;
    let (start, end) = (required(&p, "start")?, required(&p, "end")?);
    let wav = blocking(move || app.open(&id)?.audio_slice(&direction, start, end)).await?;
    Ok(([(CONTENT_TYPE, "audio/wav")], wav).into_response())
}

async fn get_beampattern(State(app): State<Arc<App>>, Path(id): Path<String>, p: Params) -> Result<Response> {
    let p = params(p)?;
    let freq = required(&p, "freq")?;
    let resolution = number(&p, "resolution")?.unwrap_or(1.0);
    let direction = p.get("direction").cloned();
    let csv = blocking(move || app.open(&id)?.beampattern_csv(freq, direction.as_deref(), resolution)).await?;
    Ok(([(CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn get_schema(Path(name): Path<String>) -> Result<Response> {
    schemas::get(&name)
        .map(|s| json_text(s.to_string()))
        .ok_or_else(|| ServiceError::BadRequest(format!("no schema named {name:?}")))
}

async fn not_found() -> Response {
    let body = crate::error::ErrorBody {
        stage: "request".into(),
        code: "not_found".into(),
        message: "no such endpoint".into(),
    };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

async fn method_not_allowed() -> Response {
    ServiceError::MethodNotAllowed.into_response()
}

async fn require_token(State(app): State<Arc<App>>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.config.api_token {
        let given = req
            .headers()
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ServiceError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub fn router(app: Arc<App>) -> Router {
    let upload_limit = app.config.max_upload_mb.saturating_mul(1024 * 1024);
    let sessions = Router::new()
        .route(
            "/sessions",
            get(list_sessions).post(create_session).layer(DefaultBodyLimit::max(upload_limit)),
        )
        .route("/sessions/{id}", get(get_manifest))
        .route("/sessions/{id}/status", get(get_status))
        .route("/sessions/{id}/query", axum::routing::post(post_query))
        .route("/sessions/{id}/audio", get(get_audio))
        .route("/sessions/{id}/beampattern", get(get_beampattern))
        .route_layer(middleware::from_fn_with_state(app.clone(), require_token));

    let base = Router::new().merge(sessions).route("/schemas/{name}", get(get_schema));
    let base = match &app.config.static_dir {
        Some(dir) => base.fallback_service(ServeDir::new(dir).not_found_service(not_found.into_service())),
        None => base
            .route("/", get(|| async { Html(INDEX_HTML) }))
            .route("/index.html", get(|| async { Html(INDEX_HTML) }))
            .fallback(not_found),
    };
    base.method_not_allowed_fallback(method_not_allowed).with_state(app)
}

pub async fn bind(addr: &str) -> Result<TcpListener> {
    TcpListener::bind(addr).await.map_err(|source| ServiceError::BindFailure {
        addr: addr.to_string(),
        source,
    })
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
pub async fn serve(app: Arc<App>, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Io)
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}
