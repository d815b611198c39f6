//! JSON scoring service: `POST /v1/score` and `GET /v1/health`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AppConfig, Scorer};

#[derive(Debug, Deserialize)]
pub struct ScoreRequest {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ScoreResponse {
    pub scores: BTreeMap<String, f64>,
    pub model: String,
}

/// Shared read-only state. `None` means no weights are loaded and scoring answers 503.
#[derive(Clone, Default)]
pub struct ServiceState {
    scorer: Option<Arc<Scorer>>,
}

impl ServiceState {
    pub fn new(scorer: Option<Scorer>) -> Self {
        ServiceState {
            scorer: scorer.map(Arc::new),
        }
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(state): State<ServiceState>) -> Response {
    Json(json!({ "status": "ok", "model_loaded": state.scorer.is_some() })).into_response()
}

async fn score(State(state): State<ServiceState>, body: Bytes) -> Response {
    let req: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) if e.is_data() => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let Some(scorer) = state.scorer.clone() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model weights loaded");
    };
    let result = tokio::task::spawn_blocking(move || {
        scorer.score(&req.title, &req.body).map(|scores| ScoreResponse {
            scores,
            model: scorer.fingerprint.clone(),
        })
    })
    .await;
    match result {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .with_state(state)
}

/// Binds the configured address and serves until Ctrl-C. Without loadable
/// weights the service still starts and scoring answers 503.
pub async fn serve(cfg: &AppConfig) -> anyhow::Result<()> {
    let scorer = match Scorer::load(cfg) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("starting without a model: {e:#}");
            None
        }
    };
    let listener = tokio::net::TcpListener::bind(&cfg.address).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(ServiceState::new(scorer)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
