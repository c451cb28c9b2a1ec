use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::header;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::api::{recognize, ModelInfo, RecognizeRequest, Recognized};
use crate::error::ApiError;
use crate::store::ModelStore;

pub const DEFAULT_MAX_BODY_BYTES: usize = 1 << 20;

const PLACEHOLDER_INDEX: &str = include_str!("index.html");

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub max_body_bytes: usize,
    pub index_html: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            index_html: PLACEHOLDER_INDEX.to_string(),
        }
    }
}

impl ServerConfig {
    /// Serves `index.html` from a built web client directory at `/`.
    pub fn with_static_dir(mut self, dir: &Path) -> std::io::Result<Self> {
        self.index_html = std::fs::read_to_string(dir.join("index.html"))?;
        Ok(self)
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<ModelStore>,
    index_html: Arc<str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub generation: u64,
    pub models: Vec<String>,
}

pub fn router(store: Arc<ModelStore>, config: ServerConfig) -> Router {
    let state = AppState {
        store,
        index_html: config.index_html.into(),
    };
    Router::new()
        .route("/", get(index))
        .route("/models", get(models))
        .route("/recognize", post(recognize_handler))
        .route("/admin/reload", post(reload))
        .layer(DefaultBodyLimit::max(config.max_body_bytes))
        .with_state(state)
}

async fn index(State(state): State<AppState>) -> Html<String> {
    Html(state.index_html.to_string())
}

async fn models(State(state): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(state.store.snapshot().listing())
}

async fn recognize_handler(
    State(state): State<AppState>,
    body: Result<Json<RecognizeRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = body.map_err(|r| ApiError::Rejected {
        status: r.status(),
        message: r.body_text(),
    })?;
    let model = state
        .store
        .snapshot()
        .get(&request.model)
        .ok_or_else(|| ApiError::UnknownModel(request.model.clone()))?;
    let result = tokio::task::spawn_blocking(move || recognize(&model, &request))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(match result {
        Recognized::Json(response) => Json(response).into_response(),
        Recognized::Text(text) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response(),
    })
}

async fn reload(State(state): State<AppState>) -> Result<Json<ReloadResponse>, ApiError> {
    let store = state.store.clone();
    let generation = tokio::task::spawn_blocking(move || store.reload())
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Reload(e.to_string()))?;
    let snapshot = state.store.snapshot();
    tracing::info!(generation, "models reloaded");
    Ok(Json(ReloadResponse {
        generation,
        models: snapshot.names(),
    }))
}

/// Serves until Ctrl-C.
pub async fn serve(listener: TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
