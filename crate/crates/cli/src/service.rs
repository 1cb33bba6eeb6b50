//! Loopback HTTP service: screening API, session log and the static UI.

use std::collections::{HashMap, VecDeque};
use std::net::{IpAddr, SocketAddr};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State};
use axum::http::{header, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::Engine as _;
use msl_core::model_io::{validate_envelope, ModelContainer};
use msl_core::screening::{
    screen_bytes, CaseLogEntry, CaseLogError, OperatorDecision, ScreenError, ScreeningResult, SessionLog,
    TriageThresholds,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 10 * 1024 * 1024;

/// Screening results kept for later case confirmation by id.
const RECENT_CAPACITY: usize = 4096;

const INDEX_HTML: &str = include_str!("../static/index.html");

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Default)]
struct RecentResults {
    by_id: HashMap<String, ScreeningResult>,
    order: VecDeque<String>,
}

impl RecentResults {
    fn insert(&mut self, id: String, result: ScreeningResult) {
        if self.order.len() == RECENT_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.by_id.remove(&old);
            }
        }
        self.order.push_back(id.clone());
        self.by_id.insert(id, result);
    }
}

pub struct AppState {
    model: Arc<ModelContainer>,
    thresholds: TriageThresholds,
    workers: Arc<Semaphore>,
    log: Arc<Mutex<SessionLog>>,
    recent: Mutex<RecentResults>,
    static_dir: Option<PathBuf>,
}

impl AppState {
    /// `workers` bounds concurrent inferences; at least one is allowed.
    pub fn new(
        model: ModelContainer,
        thresholds: TriageThresholds,
        workers: usize,
        log: SessionLog,
        static_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            model: Arc::new(model),
            thresholds,
            workers: Arc::new(Semaphore::new(workers.max(1))),
            log: Arc::new(Mutex::new(log)),
            recent: Mutex::new(RecentResults::default()),
            static_dir,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/model", get(model_info))
        .route("/api/v1/screen", axum::routing::post(screen))
        .route("/api/v1/cases", get(list_cases).post(record_case))
        .fallback(static_asset)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Resolves the listen address. Non-loopback hosts need `allow_lan`.
pub fn check_bind_host(host: &str, port: u16, allow_lan: bool) -> Result<SocketAddr, String> {
    let ip: IpAddr = if host == "localhost" {
        IpAddr::from([127, 0, 0, 1])
    } else {
        host.parse().map_err(|_| format!("--host must be an IP address, got {host:?}"))?
    };
    if !ip.is_loopback() {
        if !allow_lan {
            return Err(format!("refusing to bind {ip}: pass --allow-lan to listen beyond loopback"));
        }
        tracing::warn!("listening on {ip}: the screening service is reachable from the local network");
    }
    Ok(SocketAddr::new(ip, port))
}

/// Serves until ctrl-c.
pub async fn run(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "model_name": state.model.metadata().model_name,
        "model_fingerprint": state.model.fingerprint(),
    }))
}

async fn model_info(State(state): State<Arc<AppState>>) -> Json<Value> {
    let m = &state.model;
    Json(json!({
        "metadata": m.metadata(),
        "class_names": m.class_names(),
        "fingerprint": m.fingerprint(),
        "param_count": m.param_count(),
        "file_bytes": m.file_size(),
        "envelope": validate_envelope(m),
        "thresholds": { "positive": state.thresholds.positive, "review_floor": state.thresholds.review_floor },
    }))
}

#[derive(Deserialize)]
struct ScreenJson {
    image_b64: String,
}

async fn image_bytes(state: &Arc<AppState>, req: Request) -> Result<Vec<u8>, ApiError> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if is_multipart {
        let mut form = Multipart::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))?
        {
            if field.name() == Some("image") {
                let data = field.bytes().await.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
                return Ok(data.to_vec());
            }
        }
        Err(ApiError::new(StatusCode::BAD_REQUEST, "multipart body has no `image` field"))
    } else {
        let Json(body) = Json::<ScreenJson>::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        base64::engine::general_purpose::STANDARD
            .decode(body.image_b64.trim())
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("image_b64 is not valid base64: {e}")))
    }
}

async fn screen(State(state): State<Arc<AppState>>, req: Request) -> Result<Json<ScreeningResult>, ApiError> {
    let bytes = image_bytes(&state, req).await?;
    let permit = state
        .workers
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "inference pool closed"))?;
    let model = state.model.clone();
    let thresholds = state.thresholds;
    let outcome = tokio::task::spawn_blocking(move || {
        let r = screen_bytes(&model, &bytes, &thresholds);
        drop(permit);
        r
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let mut result = outcome.map_err(|e| match e {
        ScreenError::Image(e) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    })?;
    let id = uuid::Uuid::new_v4().to_string();
    result.screening_id = Some(id.clone());
    state.recent.lock().expect("recent results lock").insert(id, result.clone());
    Ok(Json(result))
}

async fn list_cases(State(state): State<Arc<AppState>>) -> Json<Value> {
    let cases = state.log.lock().expect("session log lock").cases();
    Json(json!({ "cases": cases }))
}

#[derive(Deserialize)]
struct CaseRequest {
    case_id: String,
    operator_decision: OperatorDecision,
    #[serde(default)]
    notes: String,
    #[serde(default)]
    screening_id: Option<String>,
    #[serde(default)]
    result: Option<ScreeningResult>,
}

async fn record_case(State(state): State<Arc<AppState>>, req: Request) -> Result<Response, ApiError> {
    let Json(body) = Json::<CaseRequest>::from_request(req, &state)
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let result = match (&body.screening_id, body.result) {
        (Some(id), _) => state
            .recent
            .lock()
            .expect("recent results lock")
            .by_id
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown screening_id {id:?}")))?,
        (None, Some(r)) => r,
        (None, None) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "either screening_id or result is required"));
        }
    };
    let entry = CaseLogEntry {
        case_id: body.case_id,
        result,
        operator_decision: body.operator_decision,
        notes: body.notes,
    };
    let log = state.log.clone();
    let stored = entry.clone();
    tokio::task::spawn_blocking(move || log.lock().expect("session log lock").append(stored))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| match e {
            CaseLogError::InvalidCaseId => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
            CaseLogError::Duplicate(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })?;
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

/// Maps a request path onto `root`, rejecting anything that could escape it.
fn resolve_static(root: &Path, uri_path: &str) -> Option<PathBuf> {
    let rel = uri_path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let mut out = root.to_path_buf();
    for c in Path::new(rel).components() {
        match c {
            Component::Normal(part) => out.push(part),
            _ => return None,
        }
    }
    Some(out)
}

async fn static_asset(State(state): State<Arc<AppState>>, uri: Uri) -> Response {
    let path = uri.path();
    if path.starts_with("/api/") {
        return ApiError::new(StatusCode::NOT_FOUND, format!("no such endpoint {path}")).into_response();
    }
    let Some(root) = &state.static_dir else {
        if path == "/" || path == "/index.html" {
            return asset(INDEX_HTML.as_bytes().to_vec(), "text/html; charset=utf-8");
        }
        return ApiError::new(StatusCode::NOT_FOUND, "not found").into_response();
    };
    let Some(file) = resolve_static(root, path) else {
        return ApiError::new(StatusCode::BAD_REQUEST, "invalid path").into_response();
    };
    let read = file.clone();
    match tokio::task::spawn_blocking(move || std::fs::read(read)).await {
        Ok(Ok(bytes)) => asset(bytes, content_type(&file)),
        _ => ApiError::new(StatusCode::NOT_FOUND, "not found").into_response(),
    }
}

fn asset(bytes: Vec<u8>, ct: &'static str) -> Response {
    let mut r = bytes.into_response();
    r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(ct));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_paths_stay_under_root() {
        let root = Path::new("/srv/ui");
        assert_eq!(resolve_static(root, "/"), Some(root.join("index.html")));
        assert_eq!(resolve_static(root, "/assets/app.js"), Some(root.join("assets/app.js")));
        assert_eq!(resolve_static(root, "/../etc/passwd"), None);
        assert_eq!(resolve_static(root, "/a/../../b"), None);
    }

    #[test]
    fn lan_binding_is_opt_in() {
        assert!(check_bind_host("127.0.0.1", 0, false).is_ok());
        assert!(check_bind_host("::1", 0, false).is_ok());
        assert!(check_bind_host("localhost", 0, false).is_ok());
        assert!(check_bind_host("0.0.0.0", 0, false).is_err());
        assert!(check_bind_host("0.0.0.0", 0, true).is_ok());
        assert!(check_bind_host("example.org", 0, true).is_err());
    }
}
