use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oodkit::datamodel::{ModelBundle, ScoringMethod};
use oodkit::density::Decision;
use oodkit::pipeline::ServingModel;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::error::ServiceError;
use crate::provider::{ProviderClient, ProviderConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub ood_score: f64,
    pub is_ood: bool,
    pub threshold: f64,
}

#[derive(Debug, Default)]
pub struct Counters {
    pub requests: AtomicU64,
    pub flagged_ood: AtomicU64,
    pub errors: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> Value {
        json!({
            "requests": self.requests.load(Ordering::Relaxed),
            "flagged_ood": self.flagged_ood.load(Ordering::Relaxed),
            "errors": self.errors.load(Ordering::Relaxed),
        })
    }
}

/// Shared, read-only state behind every handler; only the counters change.
#[derive(Debug)]
pub struct AppState {
    pub model: ServingModel,
    pub model_digest: String,
    config: Value,
    provider: Option<ProviderClient>,
    pub counters: Counters,
}

impl AppState {
    /// Checks the serving preconditions. A provider is only accepted for
    /// embedding models, and its dimension must match the model input.
    pub fn new(bundle: &ModelBundle, model_digest: String, provider: Option<ProviderConfig>) -> Result<Self, ServiceError> {
        let model = ServingModel::from_bundle(bundle)?;
        let provider = match provider {
            None => None,
            Some(mut cfg) => {
                let Some(input_dim) = model.input_dim() else {
                    return Err(ServiceError::Config(
                        "a provider needs a density model; this bundle scores log-probabilities".into(),
                    ));
                };
                match cfg.dim {
                    Some(d) if d != input_dim => {
                        return Err(ServiceError::DimMismatch {
                            expected: input_dim,
                            got: d,
                        })
                    }
                    _ => cfg.dim = Some(input_dim),
                }
                Some(ProviderClient::new(cfg)?)
            }
        };
        Ok(Self {
            model,
            model_digest,
            config: json!({
                "config": bundle.config,
                "provenance": bundle.provenance,
            }),
            provider,
            counters: Counters::default(),
        })
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn check_array(name: &str, v: &[f64]) -> Result<(), ApiError> {
    if v.is_empty() {
        return Err(bad_request(format!("`{name}` must be nonempty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(bad_request(format!("`{name}` must be finite")));
    }
    Ok(())
}

async fn decide(state: &AppState, req: ScoreRequest) -> Result<Decision, ApiError> {
    let present = [req.embedding.is_some(), req.logprobs.is_some(), req.text.is_some()];
    if present.iter().filter(|p| **p).count() != 1 {
        return Err(bad_request("exactly one of `embedding`, `logprobs`, `text` is required"));
    }
    let model_err = |e: oodkit::OodError| bad_request(e.to_string());
    if let Some(x) = req.embedding {
        check_array("embedding", &x)?;
        return state.model.decide_embedding(&x).map_err(model_err);
    }
    if let Some(lp) = req.logprobs {
        check_array("logprobs", &lp)?;
        return state.model.decide_logprobs(&lp).map_err(model_err);
    }
    let text = req.text.unwrap_or_default();
    let provider = state.provider.as_ref().ok_or_else(|| {
        ApiError(
            StatusCode::SERVICE_UNAVAILABLE,
            "text requests need an embedding provider".into(),
        )
    })?;
    let set = provider
        .fetch(&[text])
        .await
        .map_err(|e| ApiError(StatusCode::BAD_GATEWAY, e.to_string()))?;
    state.model.decide_embedding(&set.rows[0].vector).map_err(model_err)
}

async fn score(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ScoreRequest>, JsonRejection>,
) -> Result<Json<ScoreResponse>, ApiError> {
    state.counters.requests.fetch_add(1, Ordering::Relaxed);
    let outcome = match body {
        Ok(Json(req)) => decide(&state, req).await,
        Err(rejection) => Err(bad_request(rejection.body_text())),
    };
    match outcome {
        Ok(d) => {
            if d.is_ood {
                state.counters.flagged_ood.fetch_add(1, Ordering::Relaxed);
            }
            Ok(Json(ScoreResponse {
                ood_score: d.ood_score,
                is_ood: d.is_ood,
                threshold: state.model.threshold,
            }))
        }
        Err(e) => {
            state.counters.errors.fetch_add(1, Ordering::Relaxed);
            Err(e)
        }
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_digest": state.model_digest }))
}

async fn info(State(state): State<Arc<AppState>>) -> Json<Value> {
    let method = match state.model.method {
        ScoringMethod::Density => "density",
        ScoringMethod::Ln => "ln",
    };
    Json(json!({
        "method": method,
        "threshold": state.model.threshold,
        "input_dim": state.model.input_dim(),
        "adapted": state.model.detector.as_ref().is_some_and(|d| d.encoder.is_some()),
        "model_digest": state.model_digest,
        "provider": state.provider.as_ref().map(|p| p.config()),
        "bundle": state.config,
        "counters": state.counters.snapshot(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .route("/v1/info", get(info))
        .with_state(state)
}

/// Binds `addr` and serves until the process receives Ctrl-C.
pub async fn serve(state: AppState, addr: &str) -> Result<(), ServiceError> {
    let bind_err = |source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    };
    let listener = TcpListener::bind(addr).await.map_err(bind_err)?;
    log::info!("listening on {}", listener.local_addr().map_err(bind_err)?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(bind_err)
}
