//! HTTP suggestion service.
//!
//! | route              | body                                             |
//! |--------------------|--------------------------------------------------|
//! | `POST /api/suggest`| `{conversation:[{sender,text}], n?}` → suggestions |
//! | `GET /api/health`  | `{status, model_id, response_set_size}`          |
//! | `GET /api/config`  | `{alpha, n1, n2, jaccard_threshold, k_intents, dims}` |
//!
//! The engine is loaded once into a [`OnceLock`] and only read afterwards.
//! Until it is set, `/api/health` and `/api/suggest` answer 503.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::encoder::{Dims, EncoderError, EncoderParams};
use crate::fingerprint::short_hash;
use crate::ranker::{suggest, RankConfig, RankError};
use crate::responseset::{ResponseSet, ResponseSetError};
use crate::textproc::Vocab;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("model: {0}")]
    Model(#[from] EncoderError),
    #[error("response set: {0}")]
    ResponseSet(#[from] ResponseSetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("response vectors have dimension {found}, model outputs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Everything needed to answer a suggestion request.
#[derive(Debug)]
pub struct Engine {
    pub params: EncoderParams,
    pub vocab: Vocab,
    pub rset: ResponseSet,
    pub rank: RankConfig,
    pub model_id: String,
}

impl Engine {
    pub fn new(params: EncoderParams, vocab: Vocab, rset: ResponseSet, rank: RankConfig, model_id: String) -> Result<Self, ServiceError> {
        let found = rset.entries.first().map_or(params.dims.d_out, |e| e.vector.len());
        if found != params.dims.d_out {
            return Err(ServiceError::DimensionMismatch {
                expected: params.dims.d_out,
                found,
            });
        }
        Ok(Self {
            params,
            vocab,
            rset,
            rank,
            model_id,
        })
    }

    /// Loads a checkpoint and a response set; the model id is a hash of the checkpoint file.
    pub fn load(model: &Path, responses: &Path, rank: RankConfig) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(model)?;
        let (params, vocab) = EncoderParams::from_checkpoint_json(&text)?;
        let rset = ResponseSet::load(responses)?;
        Self::new(params, vocab, rset, rank, short_hash(text.as_bytes()))
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    engine: Arc<OnceLock<Arc<Engine>>>,
    /// Rank settings reported before the engine is loaded.
    pending_rank: RankConfig,
}

impl AppState {
    pub fn empty(rank: RankConfig) -> Self {
        Self {
            engine: Arc::default(),
            pending_rank: rank,
        }
    }

    pub fn loaded(engine: Engine) -> Self {
        let state = Self::empty(engine.rank.clone());
        state.install(engine);
        state
    }

    /// Installs the engine. Returns `false` if one was already installed.
    pub fn install(&self, engine: Engine) -> bool {
        self.engine.set(Arc::new(engine)).is_ok()
    }

    pub fn engine(&self) -> Option<&Arc<Engine>> {
        self.engine.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    Me,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub sender: Sender,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub conversation: Vec<Turn>,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionOut {
    pub text: String,
    pub score: f64,
    pub intent_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub suggestions: Vec<SuggestionOut>,
    pub model_id: String,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_id: Option<String>,
    pub response_set_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub alpha: f64,
    pub n1: usize,
    pub n2: usize,
    pub jaccard_threshold: f64,
    pub k_intents: Option<usize>,
    pub dims: Option<Dims>,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

fn not_loaded() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "model or response set not loaded")
}

async fn suggest_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let start = Instant::now();
    let Some(engine) = state.engine() else {
        return not_loaded();
    };
    let req: SuggestRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request: {e}")),
    };
    let Some(last) = req.conversation.last() else {
        return error(StatusCode::BAD_REQUEST, "conversation is empty");
    };
    if last.sender != Sender::Other {
        return error(StatusCode::BAD_REQUEST, "last turn must come from the other party");
    }
    let mut rank = engine.rank.clone();
    if let Some(n) = req.n {
        if n == 0 || n > rank.n2 {
            return error(StatusCode::BAD_REQUEST, format!("n must lie in [1, {}]", rank.n2));
        }
        rank.n2 = n;
    }
    match suggest(&last.text, &engine.params, &engine.vocab, &engine.rset, &rank) {
        Ok(list) => Json(SuggestResponse {
            suggestions: list
                .into_iter()
                .map(|s| SuggestionOut {
                    text: s.text,
                    score: s.score,
                    intent_id: s.intent_id,
                })
                .collect(),
            model_id: engine.model_id.clone(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
        .into_response(),
        Err(RankError::EmptyInput) => error(StatusCode::BAD_REQUEST, "last message has no tokens"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health_handler(State(state): State<AppState>) -> Response {
    match state.engine() {
        Some(engine) => Json(HealthResponse {
            status: "ok".into(),
            model_id: Some(engine.model_id.clone()),
            response_set_size: Some(engine.rset.len()),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(HealthResponse {
                status: "loading".into(),
                model_id: None,
                response_set_size: None,
            }),
        )
            .into_response(),
    }
}

async fn config_handler(State(state): State<AppState>) -> Json<ConfigResponse> {
    let engine = state.engine();
    let rank = engine.map_or(&state.pending_rank, |e| &e.rank);
    Json(ConfigResponse {
        alpha: rank.alpha,
        n1: rank.n1,
        n2: rank.n2,
        jaccard_threshold: rank.jaccard_threshold,
        k_intents: engine.map(|e| e.rset.k_intents),
        dims: engine.map(|e| e.params.dims),
    })
}

async fn api_not_found() -> Response {
    error(StatusCode::NOT_FOUND, "no such route")
}

fn local_cors() -> CorsLayer {
    CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin: &HeaderValue, _| {
            origin.to_str().is_ok_and(|o| {
                ["http://localhost", "http://127.0.0.1", "http://[::1]"]
                    .iter()
                    .any(|p| o == *p || o.strip_prefix(p).is_some_and(|rest| rest.starts_with(':')))
            })
        }))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

/// Builds the router. When `ui_dir` exists it is served for non-API paths.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/suggest", post(suggest_handler))
        .route("/health", get(health_handler))
        .route("/config", get(config_handler))
        .fallback(api_not_found);
    let app = Router::new().nest("/api", api);
    let app = match ui_dir.filter(|d| d.is_dir()) {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    };
    app.layer(local_cors()).with_state(state)
}

/// Serves until the listener fails or the process receives ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
