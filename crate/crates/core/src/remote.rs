//! Blocking HTTP client shared by the remote ASR, embedding and chat backends.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("backend unreachable after {attempts} attempt(s): {detail}")]
    Unreachable { attempts: u32, detail: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 1000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.powi(retry.saturating_sub(1) as i32);
        Duration::from_millis((self.initial_backoff_ms as f64 * factor) as u64)
    }
}

/// Where a remote backend lives and how to authenticate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> f64 {
    120.0
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            timeout_s: default_timeout(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

fn retryable(status: StatusCode) -> bool {
    status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::REQUEST_TIMEOUT
}

/// Thin wrapper over a blocking client adding bearer auth and retries.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    endpoint: Endpoint,
    client: Client,
}

impl RemoteClient {
    pub fn new(endpoint: Endpoint) -> Result<Self, RemoteError> {
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_s))
            .build()
            .map_err(|e| RemoteError::Unreachable {
                attempts: 0,
                detail: e.to_string(),
            })?;
        Ok(Self { endpoint, client })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Sends the request built by `build` until it succeeds, a non-retryable
    /// status comes back, or the attempts run out.
    pub fn send<F>(&self, build: F) -> Result<Response, RemoteError>
    where
        F: Fn(&Client, &str) -> RequestBuilder,
    {
        let policy = self.endpoint.retry;
        let attempts = policy.max_attempts.max(1);
        let mut detail = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(policy.backoff(attempt - 1));
            }
            let mut req = build(&self.client, &self.endpoint.url);
            if let Some(token) = &self.endpoint.token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => return Ok(resp),
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    detail = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
                    if !retryable(status) {
                        return Err(RemoteError::Unreachable { attempts: attempt, detail });
                    }
                }
                Err(e) => detail = e.to_string(),
            }
            tracing::warn!(url = %self.endpoint.url, attempt, %detail, "remote call failed");
        }
        Err(RemoteError::Unreachable { attempts, detail })
    }

    pub fn post_json<T: Serialize + ?Sized>(&self, body: &T) -> Result<serde_json::Value, RemoteError> {
        let resp = self.send(|c, url| c.post(url).json(body))?;
        resp.json().map_err(|e| RemoteError::Malformed(e.to_string()))
    }
}

/// Counting semaphore bounding concurrent requests to one backend.
#[derive(Debug)]
pub struct InFlightLimit {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        Self {
            permits: Mutex::new(max.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        InFlightGuard { limit: self }
    }
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.limit.permits.lock().unwrap_or_else(|e| e.into_inner());
        *permits += 1;
        self.limit.freed.notify_one();
    }
}
