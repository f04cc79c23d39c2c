//! HTTP routes over [`turkey_core::Service`].
//!
//! Service calls touch SQLite synchronously and run on the blocking pool.

mod error;
mod shell;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use turkey_core::service::{Handshake, IngestRequest, SubmitRequest};
use turkey_core::{Service, ServiceError, TaskId, TaskSpec};

pub use error::{status_for, ApiError};

const MAX_BODY_BYTES: usize = 8 * 1024 * 1024;

#[derive(Clone)]
struct AppState {
    service: Arc<Service>,
}

/// Builds the router. Static assets under `asset_root` are served at
/// `/runner/`, `/admin/` and `/plugins/` when given.
pub fn router(service: Arc<Service>, asset_root: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/t/{task_id}", get(task_page))
        .route("/api/v1/tasks", post(create_task).get(list_tasks))
        .route("/api/v1/tasks/{id}/publish", post(publish_task))
        .route("/api/v1/tasks/{id}/close", post(close_task))
        .route("/api/v1/tasks/{id}/export.xml", get(export_xml))
        .route("/api/v1/sessions/{token}/events", post(ingest))
        .route("/api/v1/sessions/{token}/submit", post(submit))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(AppState { service });
    match asset_root {
        Some(root) => api
            .nest_service("/runner", ServeDir::new(root.join("runner")))
            .nest_service("/admin", ServeDir::new(root.join("admin")))
            .nest_service("/plugins", ServeDir::new(root.join("plugins"))),
        None => api,
    }
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Periodically abandons expired sessions until the returned handle is aborted.
pub fn spawn_session_sweeper(service: Arc<Service>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let svc = service.clone();
            match tokio::task::spawn_blocking(move || svc.abandon_expired()).await {
                Ok(Ok(0)) => {}
                Ok(Ok(n)) => tracing::info!(abandoned = n, "abandoned stale sessions"),
                Ok(Err(e)) => tracing::warn!(error = %e, "session sweep failed"),
                Err(e) => tracing::warn!(error = %e, "session sweep panicked"),
            }
        }
    })
}

async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    let service = state.service.clone();
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::from)
}

fn admin(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let header = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    state.service.authorize(header).map_err(ApiError::from)
}

/// Bodies are parsed regardless of content type so that beacon-style
/// `text/plain` posts work.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

fn wants_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|part| part.trim().starts_with("application/json")))
}

async fn task_page(
    State(state): State<AppState>,
    Path(task_id): Path<String>,
    headers: HeaderMap,
    query: Result<Query<Handshake>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(handshake) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let task_id = TaskId::from(task_id);
    if wants_json(&headers) {
        let bundle = blocking(&state, move |s| s.get_task_bundle(&task_id, &handshake)).await?;
        return Ok(Json(bundle).into_response());
    }
    let name = blocking(&state, {
        let task_id = task_id.clone();
        move |s| s.task(&task_id).map(|t| t.definition.name)
    })
    .await?;
    Ok(shell::render(&task_id, &name).into_response())
}

async fn create_task(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    admin(&state, &headers)?;
    let spec: TaskSpec = parse_body(&body)?;
    let def = blocking(&state, move |s| s.create_task(spec)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "task_id": def.task_id }))).into_response())
}

async fn list_tasks(State(state): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    admin(&state, &headers)?;
    let tasks = blocking(&state, |s| s.list_tasks()).await?;
    Ok(Json(tasks).into_response())
}

async fn publish_task(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    admin(&state, &headers)?;
    let def = blocking(&state, move |s| s.publish_task(&TaskId::from(id))).await?;
    Ok(Json(json!({ "task_id": def.task_id, "status": def.status })).into_response())
}

async fn close_task(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    admin(&state, &headers)?;
    let def = blocking(&state, move |s| s.close_task(&TaskId::from(id))).await?;
    Ok(Json(json!({ "task_id": def.task_id, "status": def.status })).into_response())
}

async fn export_xml(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    admin(&state, &headers)?;
    let xml = blocking(&state, move |s| s.export_xml(&TaskId::from(id))).await?;
    Ok(([(header::CONTENT_TYPE, "application/xml")], xml).into_response())
}

async fn ingest(State(state): State<AppState>, Path(token): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let batch: IngestRequest = parse_body(&body)?;
    let ack = blocking(&state, move |s| s.ingest_batch(&token, &batch)).await?;
    Ok(Json(ack).into_response())
}

async fn submit(State(state): State<AppState>, Path(token): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: SubmitRequest = parse_body(&body)?;
    let result = blocking(&state, move |s| s.submit_response(&token, &req)).await?;
    Ok(Json(result).into_response())
}
