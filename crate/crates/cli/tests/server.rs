use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use didgraph::datagen::ScenarioSpec;
use didgraph::graph::Diagnostic;
use didgraph_cli::server::{router, ServerConfig, MAX_SIMULATE_N};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(&ServerConfig::default())
}

async fn call(app: Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri).header(header::ORIGIN, "http://localhost:5173");
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn post_json(uri: &str, body: Value) -> (StatusCode, Value) {
    let (status, _, bytes) = call(app(), "POST", uri, Some(body)).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn scenarios_are_listed_with_cors() {
    let (status, headers, bytes) = call(app(), "GET", "/api/scenarios", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
    let listed: Vec<ScenarioSpec> = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(listed, ScenarioSpec::all().unwrap());
}

#[tokio::test]
async fn configured_origin_is_echoed() {
    let app = router(&ServerConfig { allow_origin: Some("http://localhost:5173".into()), ..ServerConfig::default() });
    let (_, headers, _) = call(app, "GET", "/api/scenarios", None).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
}

#[tokio::test]
async fn graph_queries() {
    let fig4 = ScenarioSpec::load("fig4").unwrap().diagram;
    let (status, body) = post_json("/api/validate", serde_json::to_value(&fig4).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<Vec<Diagnostic>>(body).unwrap(), vec![]);

    let (status, body) = post_json("/api/compact", json!({ "scenario": "fig4", "delta": "dY" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["form"], "compact");

    let (_, body) = post_json("/api/sets", json!({ "graph": fig4, "treatment": "A1", "outcome": "dY" })).await;
    assert_eq!(body, json!([["W0"]]));

    let (_, body) = post_json("/api/identify", json!({ "scenario": "fig4", "set": [] })).await;
    assert_eq!(body["status"], "insufficient");

    let (_, body) = post_json("/api/trace", json!({ "scenario": "fig4", "from": "A1", "to": "dY", "given": ["W0"] })).await;
    assert_eq!(body["expression"], "a");

    let (status, body) = post_json("/api/align", json!({ "scenario": "fig4", "estimators": ["delta_y", "twfe"] })).await;
    assert_eq!(status, StatusCode::OK);
    let rows = body.as_array().unwrap();
    assert!(rows.iter().any(|r| r["estimator"] == "delta_y" && r["category"] == "sufficient"));
    assert!(rows.iter().all(|r| r["estimator"] == "delta_y" || r["estimator"] == "twfe"));
}

#[tokio::test]
async fn failures_map_to_status_codes() {
    let (status, body) = post_json("/api/identify", json!({ "scenario": "fig4", "set": ["Q"] })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["kind"], "analysis");
    let (status, _, _) = call(app(), "POST", "/api/sets", Some(json!({ "graph": 3 }))).await;
    assert!(status.is_client_error());
    let (status, _, _) = call(app(), "GET", "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn simulate_returns_bounded_csv() {
    let (status, headers, bytes) =
        call(app(), "POST", "/api/simulate", Some(json!({ "scenario": "fig4", "n": 4, "seed": 3 }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "text/csv");
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("unit,period,A,Y,W0\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 2);
    let (status, body) = post_json("/api/simulate", json!({ "scenario": "fig4", "n": MAX_SIMULATE_N + 1 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "usage");
}

#[tokio::test]
async fn bench_runs_small_grids_and_enforces_limits() {
    let config = json!({ "scenarios": ["fig4"], "estimators": ["delta_y"], "n": 200, "reps": 3, "seed": 1 });
    let (status, body) = post_json("/api/bench", config).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!body["rows"].as_array().unwrap().is_empty());
    assert_eq!(body["config"]["outputs"], json!({}));
    let (status, _) = post_json("/api/bench", json!({ "reps": 101 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json("/api/bench", json!({ "n": 50_001 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json("/api/bench", json!({ "reps": 1 })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_bench_is_refused_while_one_runs() {
    let app = app();
    let long = json!({ "n": 50_000, "reps": 100 });
    let first = tokio::spawn(call(app.clone(), "POST", "/api/bench", Some(long)));
    tokio::time::sleep(Duration::from_millis(300)).await;
    let (status, _, bytes) = call(app.clone(), "POST", "/api/bench", Some(json!({ "reps": 2, "n": 50 }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(body["error"]["kind"], "busy");
    first.abort();
    let _ = first.await;
    let mut freed = false;
    for _ in 0..100 {
        let (status, _, _) = call(app.clone(), "POST", "/api/bench", Some(json!({ "scenarios": ["fig1"], "estimators": ["delta_y"], "reps": 2, "n": 50 }))).await;
        if status == StatusCode::OK {
            freed = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert!(freed, "slot released after the first request was dropped");
}
