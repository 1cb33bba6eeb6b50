use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use msl_cli::service::{router, AppState};
use msl_core::model_io::load_model;
use msl_core::screening::{CaseLogEntry, SessionLog, TriageThresholds};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn app(log: &Path, static_dir: Option<PathBuf>) -> Router {
    let model = load_model(fixture("tiny.mslw")).unwrap();
    let log = SessionLog::open(log).unwrap();
    router(Arc::new(AppState::new(model, TriageThresholds::default(), 2, log, static_dir)))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn send_json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, body) = send(app, req).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn multipart(field: &str, data: &[u8]) -> Request<Body> {
    let boundary = "msl-test-boundary";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"{field}\"; filename=\"x.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(data);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    Request::post("/api/v1/screen")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

fn image() -> Vec<u8> {
    std::fs::read(fixture("tiny_input.png")).unwrap()
}

#[tokio::test]
async fn health_and_model_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("log.jsonl"), None);
    let (s, v) = send_json(&app, get("/api/v1/health")).await;
    assert_eq!((s, v["status"].as_str()), (StatusCode::OK, Some("ok")));

    let (s, v) = send_json(&app, get("/api/v1/model")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["class_names"], json!(["mpox", "other_skin", "normal"]));
    assert_eq!(v["fingerprint"].as_str().unwrap().len(), 64);
    assert_eq!(v["param_count"], 631);
    assert_eq!(v["envelope"]["params_in_range"], false);
}

#[tokio::test]
async fn screen_multipart_and_base64_agree() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("log.jsonl"), None);
    let (s, a) = send_json(&app, multipart("image", &image())).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let probs = a["probabilities"].as_object().unwrap();
    let sum: f64 = probs.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-5);
    assert_eq!(a["predicted"], "normal");
    assert!(a["screening_id"].is_string());

    let b64 = base64::engine::general_purpose::STANDARD.encode(image());
    let (s, b) = send_json(&app, post_json("/api/v1/screen", &json!({ "image_b64": b64 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(a["probabilities"], b["probabilities"]);
    assert_ne!(a["screening_id"], b["screening_id"]);
}

#[tokio::test]
async fn oversized_bodies_are_rejected_with_413() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("log.jsonl"), None);
    let big = vec![0u8; 12 * 1024 * 1024];
    let (s, _) = send(&app, multipart("image", &big)).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let b64 = base64::engine::general_purpose::STANDARD.encode(&big);
    let (s, _) = send(&app, post_json("/api/v1/screen", &json!({ "image_b64": b64 }))).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn bad_screen_requests() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("log.jsonl"), None);
    let (s, v) = send_json(&app, multipart("image", b"not an image")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].is_string());
    let (s, _) = send(&app, multipart("photo", &image())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = send(&app, post_json("/api/v1/screen", &json!({ "image_b64": "***" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn case_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("log.jsonl");
    let app = app(&log_path, None);
    let (_, screened) = send_json(&app, multipart("image", &image())).await;
    let id = screened["screening_id"].as_str().unwrap();

    let case = |case_id: &str, decision: &str| {
        post_json(
            "/api/v1/cases",
            &json!({ "case_id": case_id, "operator_decision": decision, "screening_id": id }),
        )
    };
    let (s, v) = send_json(&app, case("c-1", "pending")).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let (s, _) = send_json(&app, case("c-1", "referred_pcr")).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = send_json(&app, case("c-1", "released")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = send_json(&app, case("bad id!", "isolated")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let unknown = json!({ "case_id": "c-2", "operator_decision": "isolated", "screening_id": "nope" });
    let (s, _) = send_json(&app, post_json("/api/v1/cases", &unknown)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let missing = json!({ "case_id": "c-2", "operator_decision": "isolated" });
    let (s, _) = send_json(&app, post_json("/api/v1/cases", &missing)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let mut result = screened.clone();
    result.as_object_mut().unwrap().remove("screening_id");
    let inline = json!({ "case_id": "c-3", "operator_decision": "released", "notes": "ok", "result": result });
    let (s, _) = send_json(&app, post_json("/api/v1/cases", &inline)).await;
    assert_eq!(s, StatusCode::CREATED);

    let (s, v) = send_json(&app, get("/api/v1/cases")).await;
    assert_eq!(s, StatusCode::OK);
    let cases = v["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 2);
    assert_eq!((cases[0]["case_id"].as_str(), cases[0]["operator_decision"].as_str()), (Some("c-1"), Some("referred_pcr")));
    assert_eq!(cases[1]["notes"], "ok");

    let text = std::fs::read_to_string(&log_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines {
        serde_json::from_str::<CaseLogEntry>(line).unwrap();
    }

    // A new service on the same log keeps earlier lines untouched.
    let again = self::app(&log_path, None);
    let (s, _) = send_json(&again, post_json("/api/v1/cases", &json!({
        "case_id": "c-4", "operator_decision": "isolated", "result": result
    })))
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let after = std::fs::read_to_string(&log_path).unwrap();
    assert!(after.starts_with(&text));
    assert_eq!(after.lines().count(), 4);
}

#[tokio::test]
async fn static_assets() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("log.jsonl"), None);
    let (s, body) = send(&app, get("/")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/v1/screen"));
    let (s, v) = send_json(&app, get("/api/v1/nope")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());

    let ui = dir.path().join("ui");
    std::fs::create_dir_all(ui.join("assets")).unwrap();
    std::fs::write(ui.join("index.html"), "<p>custom</p>").unwrap();
    std::fs::write(ui.join("assets/app.js"), "console.log(1)").unwrap();
    std::fs::write(dir.path().join("secret.txt"), "secret").unwrap();
    let app = self::app(&dir.path().join("log2.jsonl"), Some(ui));
    let (s, body) = send(&app, get("/")).await;
    assert_eq!((s, body), (StatusCode::OK, b"<p>custom</p>".to_vec()));
    let res = app.clone().oneshot(get("/assets/app.js")).await.unwrap();
    assert_eq!(res.headers()[header::CONTENT_TYPE], "text/javascript; charset=utf-8");
    let (s, body) = send(&app, get("/../secret.txt")).await;
    assert_ne!(s, StatusCode::OK);
    assert_ne!(body, b"secret".to_vec());
}
