//! HTTP service exposing the evaluation harness over JSON.
//!
//! Endpoints:
//! - `GET  /health` - liveness probe
//! - `POST /v1/eval` - run a full evaluation, returning the report and paths
//! - `GET  /v1/runs` / `GET /v1/runs/{id}` - registry of runs this instance served
//! - `POST /v1/metrics` - report from persisted results or inline outcomes
//! - `POST /v1/simulate-tool` - write a synthetic tool cache for a dataset
//! - `POST /v1/rewards` - score trajectory groups and emit advantages
//! - `POST /v1/render-prompt` - render the single-stage prompt for inspection
//!
//! File paths in requests are resolved by the service process.

mod routes;
mod state;

pub use state::AppState;

use axum::routing::{get, post};
use axum::Router;
use std::net::SocketAddr;
use tokio::net::TcpListener;

/// Build the application router with a fresh run registry.
pub fn app() -> Router {
    app_with_state(AppState::new())
}

pub fn app_with_state(state: AppState) -> Router {
    Router::new()
        .route("/health", get(routes::health))
        .route("/v1/eval", post(routes::eval))
        .route("/v1/runs", get(routes::list_runs))
        .route("/v1/runs/{run_id}", get(routes::get_run))
        .route("/v1/metrics", post(routes::metrics))
        .route("/v1/simulate-tool", post(routes::simulate_tool))
        .route("/v1/rewards", post(routes::rewards))
        .route("/v1/render-prompt", post(routes::render_prompt))
        .with_state(state)
}

/// Bind and serve until the process is stopped. Returns the bound address
/// through `on_bind` (useful with port 0).
pub async fn serve(
    addr: SocketAddr,
    on_bind: impl FnOnce(SocketAddr),
) -> Result<(), std::io::Error> {
    let listener = TcpListener::bind(addr).await?;
    on_bind(listener.local_addr()?);
    axum::serve(listener, app()).await
}

/// Spawn the service on an ephemeral local port; returns its base URL and
/// the join handle. Used by the CLI's embedded mode and by tests.
pub async fn spawn_local() -> Result<(String, tokio::task::JoinHandle<()>), std::io::Error> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app()).await {
            tracing::error!("service terminated: {e}");
        }
    });
    Ok((format!("http://{addr}"), handle))
}
