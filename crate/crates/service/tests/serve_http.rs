use std::sync::Arc;

use serde_json::{json, Value};
use tokio::net::TcpListener;
use toxbench_core::dataset::synthetic::{generate, SyntheticConfig};
use toxbench_core::models::{fit_artifact, ModelKind, ModelSpec};
use toxbench_core::protocol::{decode_response, encode_response};
use toxbench_service::serve::{serve, Predictor, ServeError};

async fn spawn(max_batch: usize) -> (String, Arc<Predictor>) {
    let split = generate(&SyntheticConfig { molecules: 120, ..SyntheticConfig::default() });
    let artifact = fit_artifact(&split.train, &ModelSpec::new(ModelKind::Linear)).unwrap();
    let predictor = Arc::new(Predictor::new(artifact, 0.5, max_batch).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, Arc::clone(&predictor), std::future::pending()));
    (format!("http://{addr}"), predictor)
}

async fn post(url: &str, body: &str) -> (u16, String) {
    let resp = reqwest::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap();
    (resp.status().as_u16(), resp.text().await.unwrap())
}

#[tokio::test]
async fn predict_answers_every_pair() {
    let (base, predictor) = spawn(16).await;
    let (status, body) = post(&format!("{base}/predict"), r#"{"smiles": ["CCO", "c1ccccc1", "not-a-smiles"]}"#).await;
    assert_eq!(status, 200, "{body}");
    let resp = decode_response(&body).unwrap();
    assert_eq!(resp.predictions.len(), 3);
    assert!(resp.predictions.values().all(|m| m.len() == 12));
    assert_eq!(resp.probabilities("not-a-smiles"), Some([0.5; 12]));
    assert_eq!(resp.probabilities("CCO"), Some(predictor.artifact().predict_smiles("CCO").unwrap()));
    assert_eq!(body, encode_response(&resp), "body is canonical");
    assert_eq!(predictor.stats().fallbacks, 1);
}

#[tokio::test]
async fn answers_do_not_depend_on_batch_company() {
    let (base, _) = spawn(16).await;
    let (_, alone) = post(&format!("{base}/predict"), r#"{"smiles": ["CCN"]}"#).await;
    let (_, together) = post(&format!("{base}/predict"), r#"{"smiles": ["c1ccccc1O", "CCN", "CC(=O)O"]}"#).await;
    let a = decode_response(&alone).unwrap();
    let b = decode_response(&together).unwrap();
    assert_eq!(a.probabilities("CCN").map(|p| p.map(f64::to_bits)), b.probabilities("CCN").map(|p| p.map(f64::to_bits)));
}

#[tokio::test]
async fn malformed_requests_get_422_with_a_path() {
    let (base, predictor) = spawn(2).await;
    let url = format!("{base}/predict");
    for (body, path) in [
        (r#"{"smiles": "CCO"}"#, "smiles"),
        (r#"{"smiles": ["CCO", 3]}"#, "smiles[1]"),
        (r#"{"smiles": ["CCO", "CCO"]}"#, "smiles[1]"),
        (r#"{"smiles": []}"#, "smiles"),
        (r#"{"smiles": ["C"], "extra": 1}"#, "extra"),
        (r#"{"smiles": ["C", "CC", "CCC"]}"#, "smiles"),
    ] {
        let (status, text) = post(&url, body).await;
        assert_eq!(status, 422, "{body}");
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["error"]["path"], json!(path), "{body}: {text}");
    }
    assert_eq!(predictor.stats().rejected, 6);
}

#[tokio::test]
async fn health_and_metrics() {
    let (base, _) = spawn(16).await;
    let health: Value = reqwest::get(format!("{base}/healthz")).await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["kind"], "linear");
    post(&format!("{base}/predict"), r#"{"smiles": ["CCO"]}"#).await;
    let metrics: Value = reqwest::get(format!("{base}/metrics")).await.unwrap().json().await.unwrap();
    assert_eq!(metrics["requests"], 1);
    assert_eq!(metrics["molecules"], 1);
}

#[test]
fn bad_configuration_is_refused() {
    let split = generate(&SyntheticConfig { molecules: 60, ..SyntheticConfig::default() });
    let artifact = fit_artifact(&split.train, &ModelSpec::new(ModelKind::Linear)).unwrap();
    assert!(matches!(Predictor::new(artifact.clone(), 1.5, 10), Err(ServeError::Config(_))));
    let mut stale = artifact;
    stale.manifest.feature_definition_hash = "0".repeat(64);
    assert!(matches!(Predictor::new(stale, 0.5, 10), Err(ServeError::Definitions { .. })));
}
