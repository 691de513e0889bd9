//! HTTP JSON API over a [`Study`].

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::analyze::analyze;
use crate::config::Role;
use crate::events::Feedback;
use crate::study::Study;
use crate::StudyError;

type Shared = Arc<Mutex<Study>>;

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            StudyError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            StudyError::UnknownCase(_) => (StatusCode::NOT_FOUND, "unknown_case"),
            StudyError::Protocol(_) => (StatusCode::CONFLICT, "protocol"),
            StudyError::Invalid(_) | StudyError::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({ "error": code, "message": self.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
struct NewSession {
    reader_id: String,
    role: Role,
}

#[derive(Deserialize)]
struct ReportBody {
    text: String,
    client_elapsed_s: Option<f64>,
}

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, Study> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

async fn create_session(State(s): State<Shared>, Json(body): Json<NewSession>) -> Result<Response, StudyError> {
    let id = lock(&s).create_session(&body.reader_id, body.role)?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

async fn next_case(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, StudyError> {
    Ok(match lock(&s).next_case(&id)? {
        Some(p) => Json(p).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_report(
    State(s): State<Shared>,
    Path((id, case)): Path<(String, String)>,
    headers: HeaderMap,
    Json(body): Json<ReportBody>,
) -> Result<Response, StudyError> {
    let key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let ack = lock(&s).submit_report(&id, &case, &body.text, body.client_elapsed_s, key)?;
    Ok(Json(ack).into_response())
}

async fn submit_feedback(
    State(s): State<Shared>,
    Path((id, case)): Path<(String, String)>,
    Json(body): Json<Feedback>,
) -> Result<Response, StudyError> {
    lock(&s).submit_feedback(&id, &case, body)?;
    Ok(Json(json!({ "ok": true })).into_response())
}

async fn analysis(State(s): State<Shared>) -> Result<Response, StudyError> {
    let study = lock(&s);
    Ok(Json(analyze(study.events())?).into_response())
}

async fn image(State(s): State<Shared>, Path((case, index)): Path<(String, usize)>) -> Result<Response, StudyError> {
    let path = lock(&s)
        .image_path(&case, index)
        .ok_or_else(|| StudyError::UnknownCase(case.clone()))?;
    let bytes: Vec<u8> = std::fs::read(&path)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

pub fn router(study: Study) -> Router {
    let state: Shared = Arc::new(Mutex::new(study));
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_case))
        .route("/sessions/{id}/cases/{case}/report", post(submit_report))
        .route("/sessions/{id}/cases/{case}/feedback", post(submit_feedback))
        .route("/analysis", get(analysis))
        .route("/images/{case}/{index}", get(image))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(study: Study, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "reader study listening");
    axum::serve(listener, router(study)).await
}

/// Binds `addr` and serves from a background thread with its own runtime.
/// Returns the bound address (useful with port 0).
pub fn spawn(study: Study, addr: SocketAddr) -> std::io::Result<SocketAddr> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let bound = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
            let _ = axum::serve(listener, router(study)).await;
        });
    });
    Ok(bound)
}
