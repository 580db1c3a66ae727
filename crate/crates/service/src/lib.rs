//! HTTP front end for generation.
//!
//! Routes:
//! - `POST /v1/chat`: persona, client-held history and a new user message in;
//!   ranked replies out.
//! - `GET /v1/health`: liveness plus whether the checkpoint has loaded.
//! - `GET /v1/model`: configuration of the loaded model.
//!
//! The service is stateless: the caller sends the whole conversation each
//! turn. Generation runs on blocking threads, at most one per CPU core;
//! further requests wait for a slot.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

use parley::checkpoint::Checkpoint;
use parley::decoder::{self, DecodeParams};
use parley::input::{DialogExample, Speaker, Utterance};
use parley::model::{ModelConfig, ModelParams};
use parley::scoring::TransformerScorer;
use parley::tokenizer::BpeModel;
use parley::Error;

pub const DEFAULT_PORT: u16 = 8642;
pub const MAX_BODY_BYTES: usize = 64 * 1024;

pub struct LoadedModel {
    pub params: ModelParams<f32>,
    pub tokenizer: BpeModel,
    pub step: usize,
}

impl From<Checkpoint<f32>> for LoadedModel {
    fn from(ck: Checkpoint<f32>) -> Self {
        Self { params: ck.params, tokenizer: ck.tokenizer, step: ck.step }
    }
}

#[derive(Clone)]
pub struct AppState {
    model: Arc<RwLock<Option<Arc<LoadedModel>>>>,
    workers: Arc<Semaphore>,
    defaults: DecodeParams,
}

impl AppState {
    pub fn new(defaults: DecodeParams) -> Self {
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self { model: Arc::new(RwLock::new(None)), workers: Arc::new(Semaphore::new(cores)), defaults }
    }

    pub fn with_model(model: LoadedModel, defaults: DecodeParams) -> Self {
        let s = Self::new(defaults);
        s.set_model(model);
        s
    }

    pub fn set_model(&self, model: LoadedModel) {
        *self.model.write().expect("model lock") = Some(Arc::new(model));
    }

    fn loaded(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().expect("model lock").clone()
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub persona: Vec<String>,
    pub history: Vec<Utterance>,
    pub message: String,
    #[serde(default)]
    pub decode: Option<DecodeOverrides>,
}

/// Per-request changes to the server's decoding defaults.
/// `ngram_block_n = 0` turns blocking off.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeOverrides {
    pub beam_size: Option<usize>,
    pub top_k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
    pub ngram_block_n: Option<usize>,
    pub rank_lambda: Option<f64>,
    pub seed: Option<u64>,
}

impl DecodeOverrides {
    fn apply(&self, base: DecodeParams) -> DecodeParams {
        DecodeParams {
            beam_size: self.beam_size.unwrap_or(base.beam_size),
            top_k: self.top_k.unwrap_or(base.top_k),
            temperature: self.temperature.unwrap_or(base.temperature),
            max_new_tokens: self.max_new_tokens.unwrap_or(base.max_new_tokens),
            ngram_block_n: match self.ngram_block_n {
                Some(0) => None,
                Some(n) => Some(n),
                None => base.ngram_block_n,
            },
            rank_lambda: self.rank_lambda.unwrap_or(base.rank_lambda),
            seed: self.seed.unwrap_or(base.seed),
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub text: String,
    pub lm_norm_score: f64,
    pub cls_score: f64,
    pub rank_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub context_tokens: usize,
    pub generated_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: String,
    pub beams: Vec<Beam>,
    pub usage: Usage,
}

/// A JSON error body with its status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InputTooLong { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            Error::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn validate(req: &ChatRequest, dp: &DecodeParams) -> Result<(), ApiError> {
    if req.message.trim().is_empty() {
        return Err(ApiError::bad_request("message: must be non-empty"));
    }
    if let Some(i) = req.history.iter().position(|u| u.text.trim().is_empty()) {
        return Err(ApiError::bad_request(format!("history[{i}].text: must be non-empty")));
    }
    for (i, w) in req.history.windows(2).enumerate() {
        if w[0].speaker == w[1].speaker {
            return Err(ApiError::bad_request(format!("history[{}].speaker: speakers must alternate", i + 1)));
        }
    }
    if req.history.last().is_some_and(|u| u.speaker == Speaker::One) {
        return Err(ApiError::bad_request(format!(
            "history[{}].speaker: last turn must be speaker 2 so the message can follow",
            req.history.len() - 1
        )));
    }
    dp.validate().map_err(|e| ApiError::bad_request(format!("decode: {e}")))
}

/// Runs one chat turn synchronously. The user is speaker 1 and the persona
/// belongs to the replying speaker 2.
pub fn chat_turn(model: &LoadedModel, req: &ChatRequest, defaults: DecodeParams) -> Result<ChatResponse, ApiError> {
    let dp = req.decode.as_ref().map(|o| o.apply(defaults)).unwrap_or(defaults);
    validate(req, &dp)?;
    let mut history = req.history.clone();
    history.push(Utterance::new(Speaker::One, req.message.clone()));
    let example = DialogExample { persona: req.persona.clone(), history, reply: String::new(), candidates: Vec::new() };
    let n_positions = model.params.config.n_positions;
    let message_tokens = model.tokenizer.encode(&req.message).len();
    // BOS, separator, message, separator, reply, EOS, CLS.
    let needed = 1 + 1 + message_tokens + 1 + dp.max_new_tokens + 2;
    if needed > n_positions {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("message needs {needed} positions with max_new_tokens {}, model allows {n_positions}", dp.max_new_tokens),
        ));
    }
    let scorer = TransformerScorer::new(&model.params, &model.tokenizer, &example, dp.max_new_tokens)?;
    let context_tokens = scorer.context_tokens();
    drop(scorer);
    let gens = decoder::generate(&model.params, &model.tokenizer, &example, &dp)?;
    let generated_tokens = gens.first().map(|g| g.ids.len()).unwrap_or(0);
    let beams: Vec<Beam> = gens
        .into_iter()
        .map(|g| Beam { text: g.text, lm_norm_score: g.lm_norm_score, cls_score: g.cls_score, rank_score: g.rank_score })
        .collect();
    Ok(ChatResponse {
        reply: beams.first().map(|b| b.text.clone()).unwrap_or_default(),
        beams,
        usage: Usage { context_tokens, generated_tokens },
    })
}

async fn chat(State(state): State<AppState>, body: Bytes) -> Result<Json<ChatResponse>, ApiError> {
    let req: ChatRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let model = state
        .loaded()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model is still loading"))?;
    let _permit = state.workers.clone().acquire_owned().await.expect("semaphore open");
    let defaults = state.defaults;
    tokio::task::spawn_blocking(move || chat_turn(&model, &req, defaults))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
        .map(Json)
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "model_loaded": state.loaded().is_some() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfo {
    pub config: ModelConfig,
    pub param_count: usize,
    pub vocab_size: usize,
    pub tokenizer_hash: String,
    pub step: usize,
    pub decode_defaults: DecodeParams,
}

async fn model_info(State(state): State<AppState>) -> Result<Json<ModelInfo>, ApiError> {
    let m = state
        .loaded()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model is still loading"))?;
    Ok(Json(ModelInfo {
        config: m.params.config.clone(),
        param_count: m.params.param_count(),
        vocab_size: m.tokenizer.vocab_size(),
        tokenizer_hash: m.tokenizer.content_hash(),
        step: m.step,
        decode_defaults: state.defaults,
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(state: AppState, cors_origin: Option<HeaderValue>) -> Router {
    let mut app = Router::new()
        .route("/v1/chat", post(chat))
        .route("/v1/health", get(health))
        .route("/v1/model", get(model_info))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    if let Some(origin) = cors_origin {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    app
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub checkpoint: PathBuf,
    pub addr: SocketAddr,
    pub cors_origin: Option<String>,
    pub defaults: DecodeParams,
}

/// Binds, starts loading the checkpoint in the background and serves until
/// the process ends.
pub async fn serve(cfg: ServeConfig) -> std::io::Result<()> {
    let cors = cfg
        .cors_origin
        .as_deref()
        .map(HeaderValue::from_str)
        .transpose()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bad CORS origin: {e}")))?;
    let state = AppState::new(cfg.defaults);
    let loader = state.clone();
    let path = cfg.checkpoint.clone();
    tokio::task::spawn_blocking(move || match Checkpoint::<f32>::load(&path) {
        Ok(ck) => {
            log::info!("loaded {} ({} parameters)", path.display(), ck.params.param_count());
            loader.set_model(ck.into());
        }
        Err(e) => log::error!("failed to load {}: {e}", path.display()),
    });
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, cors)).await
}
