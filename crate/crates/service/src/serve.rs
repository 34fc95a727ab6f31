//! HTTP model server answering `/predict` from a trained artifact.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use toxbench_core::featurize::{featurize_smiles, Featurizer};
use toxbench_core::models::{Artifact, ArtifactError};
use toxbench_core::protocol::{decode_request, encode_response, PredictRequest, PredictResponse};

use crate::error_response;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub artifact: PathBuf,
    /// Emitted for every endpoint of a SMILES that fails to parse.
    pub fallback_probability: f64,
    pub max_batch: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8000)),
            artifact: PathBuf::from("artifact"),
            fallback_probability: 0.5,
            max_batch: 4096,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("artifact was built with feature definitions {artifact}, this build has {current}")]
    Definitions { artifact: String, current: String },
    #[error("invalid server configuration: {0}")]
    Config(String),
}

#[derive(Debug, Default)]
struct Counters {
    requests: AtomicU64,
    molecules: AtomicU64,
    fallbacks: AtomicU64,
    rejected: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerStats {
    pub requests: u64,
    pub molecules: u64,
    pub fallbacks: u64,
    pub rejected: u64,
}

/// A loaded artifact plus request policy. Immutable after construction apart
/// from the counters.
#[derive(Debug)]
pub struct Predictor {
    artifact: Artifact,
    fallback: f64,
    max_batch: usize,
    counters: Counters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutcome {
    pub response: PredictResponse,
    /// SMILES answered with the fallback probability.
    pub fallbacks: Vec<String>,
}

impl Predictor {
    pub fn new(artifact: Artifact, fallback: f64, max_batch: usize) -> Result<Self, ServeError> {
        if !(0.0..=1.0).contains(&fallback) {
            return Err(ServeError::Config(format!("fallback probability {fallback} outside [0, 1]")));
        }
        if max_batch == 0 {
            return Err(ServeError::Config("max_batch must be positive".into()));
        }
        let current = Featurizer::standard().definition_hash();
        if artifact.manifest.feature_definition_hash != current {
            return Err(ServeError::Definitions { artifact: artifact.manifest.feature_definition_hash.clone(), current });
        }
        Ok(Predictor { artifact, fallback, max_batch, counters: Counters::default() })
    }

    pub fn load(cfg: &ServerConfig) -> Result<Self, ServeError> {
        Predictor::new(Artifact::load(&cfg.artifact)?, cfg.fallback_probability, cfg.max_batch)
    }

    pub fn artifact(&self) -> &Artifact {
        &self.artifact
    }

    pub fn max_batch(&self) -> usize {
        self.max_batch
    }

    /// Each SMILES is handled independently, so the answer for a molecule
    /// does not depend on the rest of the batch.
    pub fn handle_predict(&self, req: &PredictRequest) -> PredictOutcome {
        let m = &self.artifact.manifest;
        let mut response = PredictResponse::new(&m.name, &m.version);
        let mut fallbacks = Vec::new();
        for (smiles, features) in req.smiles.iter().zip(featurize_smiles(&req.smiles)) {
            let probs = match features {
                Ok(raw) => self.artifact.predict_raw(&raw).expect("assembled vectors match the pipeline"),
                Err(e) => {
                    tracing::warn!(smiles = %smiles, error = %e, "unparseable SMILES, emitting fallback");
                    fallbacks.push(smiles.clone());
                    [self.fallback; 12]
                }
            };
            response.insert(smiles, &probs);
        }
        self.counters.requests.fetch_add(1, Ordering::Relaxed);
        self.counters.molecules.fetch_add(req.smiles.len() as u64, Ordering::Relaxed);
        self.counters.fallbacks.fetch_add(fallbacks.len() as u64, Ordering::Relaxed);
        PredictOutcome { response, fallbacks }
    }

    pub fn stats(&self) -> ServerStats {
        let c = &self.counters;
        ServerStats {
            requests: c.requests.load(Ordering::Relaxed),
            molecules: c.molecules.load(Ordering::Relaxed),
            fallbacks: c.fallbacks.load(Ordering::Relaxed),
            rejected: c.rejected.load(Ordering::Relaxed),
        }
    }
}

static REQUEST_IDS: AtomicU64 = AtomicU64::new(1);

async fn predict(State(p): State<Arc<Predictor>>, body: Bytes) -> Response {
    let started = Instant::now();
    let request_id = REQUEST_IDS.fetch_add(1, Ordering::Relaxed);
    let reject = |path: &str, message: &str| {
        p.counters.rejected.fetch_add(1, Ordering::Relaxed);
        tracing::info!(request_id, path, message, "rejected request");
        error_response(StatusCode::UNPROCESSABLE_ENTITY, Some(path), message)
    };
    let Ok(text) = std::str::from_utf8(&body) else {
        return reject(".", "request body is not UTF-8");
    };
    let req = match decode_request(text) {
        Ok(r) => r,
        Err(e) => return reject(&e.path, &e.message),
    };
    if req.smiles.len() > p.max_batch {
        return reject("smiles", &format!("batch of {} exceeds the limit of {}", req.smiles.len(), p.max_batch));
    }
    let batch_size = req.smiles.len();
    let worker = Arc::clone(&p);
    match tokio::task::spawn_blocking(move || worker.handle_predict(&req)).await {
        Ok(outcome) => {
            tracing::info!(
                request_id,
                batch_size,
                latency_ms = started.elapsed().as_secs_f64() * 1e3,
                fallback_count = outcome.fallbacks.len(),
                "predict"
            );
            ([(header::CONTENT_TYPE, "application/json")], encode_response(&outcome.response)).into_response()
        }
        Err(e) => {
            tracing::error!(request_id, error = %e, "prediction worker failed");
            error_response(StatusCode::INTERNAL_SERVER_ERROR, None, "internal error")
        }
    }
}

async fn healthz(State(p): State<Arc<Predictor>>) -> Json<serde_json::Value> {
    let m = &p.artifact.manifest;
    Json(serde_json::json!({"status": "ok", "name": m.name, "version": m.version, "kind": m.kind}))
}

async fn metrics(State(p): State<Arc<Predictor>>) -> Json<ServerStats> {
    Json(p.stats())
}

pub fn router(predictor: Arc<Predictor>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .with_state(predictor)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    predictor: Arc<Predictor>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(predictor)).with_graceful_shutdown(shutdown).await
}
