//! HTTP tagging service.
//!
//! `POST /tag` takes `{"query": "<raw text>"}` and answers with a
//! [`TagResponse`]. `GET /health` reports the model format version and the
//! catalog fingerprint. The model is loaded once and shared read-only.
//! Queries longer than the token cap are truncated before tagging.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use querytag::label::EntityType;
use querytag::model_io::{ModelArtifact, FORMAT_VERSION};
use querytag::net::ModelParams;
use querytag::preprocess::tokenize;
use querytag::train::predict;
use querytag::{Error, TaggedQuery};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_TOKENS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagResponse {
    pub query: String,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
    pub brand: Vec<String>,
    pub product: Vec<String>,
}

impl TagResponse {
    pub fn from_tagged(raw: &str, tagged: &TaggedQuery) -> Self {
        TagResponse {
            query: raw.to_string(),
            tokens: tagged.tokens().to_vec(),
            labels: tagged.labels().iter().map(|l| l.as_str().to_string()).collect(),
            brand: tagged.entities(EntityType::Brand),
            product: tagged.entities(EntityType::Product),
        }
    }
}

/// Normalizes, truncates to `max_tokens` and tags one raw query.
pub fn tag_query(params: &ModelParams, raw: &str, max_tokens: usize) -> querytag::Result<TagResponse> {
    let mut tokens = tokenize(raw)?;
    tokens.truncate(max_tokens.max(1));
    Ok(TagResponse::from_tagged(raw, &predict(params, &tokens)?))
}

#[derive(Debug, Deserialize)]
struct TagRequest {
    query: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub format_version: u32,
    pub catalog_fingerprint: String,
}

struct Shared {
    artifact: ModelArtifact,
    max_tokens: usize,
}

#[derive(Clone)]
pub struct ServiceState(Arc<Shared>);

impl ServiceState {
    pub fn new(artifact: ModelArtifact, max_tokens: usize) -> Self {
        ServiceState(Arc::new(Shared { artifact, max_tokens }))
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

async fn tag(State(state): State<ServiceState>, body: Bytes) -> Response {
    let req: TagRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request body: {e}")),
    };
    let Some(query) = req.query else {
        return error(StatusCode::BAD_REQUEST, "missing query");
    };
    match tag_query(&state.0.artifact.params, &query, state.0.max_tokens) {
        Ok(resp) => Json(resp).into_response(),
        Err(Error::EmptyQuery) => error(StatusCode::BAD_REQUEST, "empty query"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(state): State<ServiceState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        format_version: FORMAT_VERSION,
        catalog_fingerprint: state.0.artifact.fingerprint_hex(),
    })
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/tag", post(tag))
        .route("/health", get(health))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: ServiceState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
