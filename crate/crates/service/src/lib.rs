//! Session store, HTTP API and shared plumbing behind the `beamrecall` binary.
//!
//! [`app::App`] owns the configuration and backends; both the CLI and the
//! axum router in [`api`] go through it, so a query answered either way
//! yields the same bytes.

pub mod api;
pub mod app;
pub mod config;
pub mod error;
pub mod schemas;
pub mod session;

pub use app::{App, QueryRequest};
pub use config::ServiceConfig;
pub use error::{ErrorBody, ServiceError};
