//! Local HTTP API over the analysis operations.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use didgraph::bench::BenchConfig;
use didgraph::datagen::ScenarioSpec;
use didgraph::graph::CausalDiagram;
use serde::Serialize;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::ops;

/// Largest panel `/api/simulate` will draw.
pub const MAX_SIMULATE_N: usize = 50_000;
/// Most replications `/api/bench` will run.
pub const MAX_BENCH_REPS: usize = 100;
/// Largest per-replication sample `/api/bench` will draw.
pub const MAX_BENCH_N: usize = 50_000;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Benchmarks allowed to run at once.
    pub bench_slots: usize,
    /// Worker threads given to each benchmark.
    pub bench_workers: usize,
    /// CORS origin; any origin when absent.
    pub allow_origin: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bench_slots: 1, bench_workers: 2, allow_origin: None }
    }
}

#[derive(Clone)]
struct AppState {
    bench_slots: Arc<Semaphore>,
    bench_workers: usize,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Analysis(didgraph::Error),
    Busy,
}

impl From<didgraph::Error> for ApiError {
    fn from(e: didgraph::Error) -> Self {
        ApiError::Analysis(e)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "usage", m),
            ApiError::Analysis(e) => (StatusCode::UNPROCESSABLE_ENTITY, "analysis", e.to_string()),
            ApiError::Busy => (StatusCode::SERVICE_UNAVAILABLE, "busy", "benchmark pool is busy".to_string()),
        };
        (status, Json(serde_json::json!({ "error": ErrorBody { kind, message } }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn scenarios() -> ApiResult<Vec<ScenarioSpec>> {
    Ok(Json(ScenarioSpec::all()?))
}

async fn validate(Json(graph): Json<CausalDiagram>) -> Json<Vec<didgraph::graph::Diagnostic>> {
    Json(ops::validate(&graph))
}

async fn compact(Json(req): Json<ops::CompactRequest>) -> ApiResult<CausalDiagram> {
    Ok(Json(ops::compact_graph(&req)?))
}

async fn sets(Json(req): Json<ops::SetsRequest>) -> ApiResult<Vec<Vec<String>>> {
    Ok(Json(ops::sets(&req)?))
}

async fn trace(Json(req): Json<ops::TraceRequest>) -> ApiResult<didgraph::scm::TraceResult> {
    Ok(Json(ops::trace_path(&req)?))
}

async fn identify(Json(req): Json<ops::IdentifyRequest>) -> ApiResult<didgraph::graph::AdjustmentVerdict> {
    Ok(Json(ops::identify(&req)?))
}

async fn align(Json(req): Json<ops::AlignRequest>) -> ApiResult<Vec<didgraph::align::AlignRow>> {
    Ok(Json(ops::align(&req)?))
}

async fn simulate(Json(req): Json<ops::SimulateRequest>) -> Result<Response, ApiError> {
    if req.n > MAX_SIMULATE_N {
        return Err(ApiError::BadRequest(format!("n is limited to {MAX_SIMULATE_N}")));
    }
    let csv = tokio::task::spawn_blocking(move || ops::simulate_csv(&req))
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

/// Sets the flag when dropped, so an abandoned request stops its benchmark.
struct CancelOnDrop(Arc<AtomicBool>);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

async fn bench(State(state): State<AppState>, Json(mut config): Json<BenchConfig>) -> ApiResult<didgraph::bench::BiasReport> {
    if config.reps > MAX_BENCH_REPS {
        return Err(ApiError::BadRequest(format!("reps is limited to {MAX_BENCH_REPS}")));
    }
    if config.n > MAX_BENCH_N {
        return Err(ApiError::BadRequest(format!("n is limited to {MAX_BENCH_N}")));
    }
    // Reports are returned in the body; the server never writes files.
    config.outputs = Default::default();
    config.workers = Some(config.workers.unwrap_or(state.bench_workers).min(state.bench_workers));
    let _permit = state.bench_slots.clone().try_acquire_owned().map_err(|_| ApiError::Busy)?;
    let cancel = Arc::new(AtomicBool::new(false));
    let _cancel_guard = CancelOnDrop(cancel.clone());
    let report = tokio::task::spawn_blocking(move || ops::bench(&config, &cancel))
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))??;
    Ok(Json(report))
}

/// The API router.
pub fn router(config: &ServerConfig) -> Router {
    let origin = match &config.allow_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::from(Any),
        },
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    let state = AppState { bench_slots: Arc::new(Semaphore::new(config.bench_slots.max(1))), bench_workers: config.bench_workers.max(1) };
    Router::new()
        .route("/api/scenarios", get(scenarios))
        .route("/api/validate", post(validate))
        .route("/api/compact", post(compact))
        .route("/api/sets", post(sets))
        .route("/api/trace", post(trace))
        .route("/api/identify", post(identify))
        .route("/api/align", post(align))
        .route("/api/simulate", post(simulate))
        .route("/api/bench", post(bench))
        .with_state(state)
        .layer(cors)
}

/// Serves the API on `127.0.0.1:port` until the process ends.
pub async fn serve(port: u16, allow_origin: Option<String>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(&ServerConfig { allow_origin, ..ServerConfig::default() })).await
}
