use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use toxbench_core::dataset::synthetic::{generate, SyntheticConfig};
use toxbench_core::dataset::{save_dataset, LabelMatrix};
use toxbench_core::metrics::score_run;
use toxbench_core::models::{fit_artifact, ModelKind, ModelSpec};
use toxbench_core::protocol::{decode_request, decode_response, encode_response, ViolationKind};
use toxbench_service::orchestrate::{
    aggregate_results, evaluate_dataset, run_evaluation, CallError, DatasetRef, EvaluationJob, EvaluationStatus,
    PredictClient, RetryPolicy,
};
use toxbench_service::serve::Predictor;
use url::Url;

/// Answers in-process from a predictor, optionally corrupting replies.
struct LocalClient {
    predictor: Predictor,
    tamper: fn(&mut serde_json::Value),
    calls: AtomicUsize,
}

impl PredictClient for LocalClient {
    async fn post(&self, _url: &Url, body: String, _timeout: Duration) -> Result<String, CallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let req = decode_request(&body).map_err(|e| CallError::Status { status: 422, body: e.to_string() })?;
        let text = encode_response(&self.predictor.handle_predict(&req).response);
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        (self.tamper)(&mut value);
        Ok(value.to_string())
    }
}

struct Unreachable {
    calls: Mutex<Vec<std::time::Instant>>,
}

impl PredictClient for Unreachable {
    async fn post(&self, _url: &Url, _body: String, _timeout: Duration) -> Result<String, CallError> {
        self.calls.lock().unwrap().push(std::time::Instant::now());
        Err(CallError::Transport("connection refused".into()))
    }
}

struct Status400;

impl PredictClient for Status400 {
    async fn post(&self, _url: &Url, _body: String, _timeout: Duration) -> Result<String, CallError> {
        Err(CallError::Status { status: 400, body: "bad".into() })
    }
}

fn fixture() -> (LabelMatrix, Predictor) {
    let split = generate(&SyntheticConfig { molecules: 160, ..SyntheticConfig::default() });
    let artifact = fit_artifact(&split.train, &ModelSpec::new(ModelKind::Linear)).unwrap();
    (split.test, Predictor::new(artifact, 0.5, 4096).unwrap())
}

fn job(batch_size: usize) -> EvaluationJob {
    let mut job = EvaluationJob::new(
        Url::parse("http://model.invalid/predict").unwrap(),
        DatasetRef { path: "unused.csv".into(), content_hash: "0".repeat(64) },
    );
    job.batch_size = batch_size;
    job.retry.base_delay_ms = 5;
    job
}

fn local(predictor: Predictor, tamper: fn(&mut serde_json::Value)) -> LocalClient {
    LocalClient { predictor, tamper, calls: AtomicUsize::new(0) }
}

#[tokio::test]
async fn scored_result_equals_offline_score() {
    let (test, predictor) = fixture();
    let offline: Vec<[f64; 12]> =
        test.smiles().iter().map(|s| predictor.artifact().predict_smiles(s).unwrap()).collect();
    let expected = score_run(&offline, &test).unwrap();
    let client = local(predictor, |_| {});
    let result = evaluate_dataset(&job(7), &test, &client).await;
    assert_eq!(result.status, EvaluationStatus::Scored, "{:?}", result.failure);
    assert_eq!(result.mean_auc, Some(expected.mean_auc));
    assert_eq!(result.per_endpoint, expected.per_endpoint);
    assert_eq!(result.request_count, test.len().div_ceil(7));
}

#[tokio::test]
async fn one_missing_pair_is_rejected() {
    let (test, predictor) = fixture();
    let client = local(predictor, |v| {
        let preds = v["predictions"].as_object_mut().unwrap();
        let first = preds.keys().next().unwrap().clone();
        preds[&first].as_object_mut().unwrap().remove("SR-p53");
    });
    let result = evaluate_dataset(&job(1000), &test, &client).await;
    assert_eq!(result.status, EvaluationStatus::Rejected);
    assert_eq!(result.validation.violations.len(), 1);
    assert_eq!(result.validation.count(ViolationKind::MissingTarget), 1);
    assert!(result.mean_auc.is_none());
}

#[tokio::test]
async fn unreachable_endpoint_fails_after_three_attempts() {
    let (test, _) = fixture();
    let client = Unreachable { calls: Mutex::new(Vec::new()) };
    let mut j = job(1000);
    j.retry = RetryPolicy { max_attempts: 3, base_delay_ms: 20, factor: 2.0 };
    let result = evaluate_dataset(&j, &test, &client).await;
    assert_eq!(result.status, EvaluationStatus::Failed);
    let waits: Vec<u64> = result.attempts.iter().map(|a| a.waited_ms).collect();
    assert_eq!(waits, vec![0, 20, 40]);
    let calls = client.calls.lock().unwrap();
    assert_eq!(calls.len(), 3);
    assert!(calls[2] - calls[1] >= Duration::from_millis(40));
    assert_eq!(RetryPolicy::default().delay_before(3), Duration::from_secs(2));
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (test, _) = fixture();
    let result = evaluate_dataset(&job(1000), &test, &Status400).await;
    assert_eq!(result.status, EvaluationStatus::Failed);
    assert_eq!(result.attempts.len(), 1);
}

#[tokio::test]
async fn batch_size_does_not_change_scores() {
    let (test, predictor) = fixture();
    let client = local(predictor, |_| {});
    let one = evaluate_dataset(&job(1), &test, &client).await;
    let many = evaluate_dataset(&job(64), &test, &client).await;
    assert_eq!(one.per_endpoint, many.per_endpoint);
    assert_eq!(one.unique_smiles, client.calls.load(Ordering::SeqCst) - many.request_count);
}

#[tokio::test]
async fn changed_dataset_is_not_scored() {
    let (test, predictor) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.csv");
    save_dataset(&test, &path).unwrap();
    let mut j = job(64);
    j.dataset = DatasetRef::from_file(&path).unwrap();
    let client = local(predictor, |_| {});
    assert_eq!(run_evaluation(&j, &client).await.status, EvaluationStatus::Scored);
    std::fs::write(&path, std::fs::read_to_string(&path).unwrap() + "\n").unwrap();
    let result = run_evaluation(&j, &client).await;
    assert_eq!(result.status, EvaluationStatus::Failed);
    assert!(result.failure.unwrap().contains("changed"));
}

#[tokio::test]
async fn aggregation_refuses_rejected_runs() {
    let (test, predictor) = fixture();
    let good = local(predictor, |_| {});
    let scored = evaluate_dataset(&job(64), &test, &good).await;
    let mut rejected = scored.clone();
    rejected.status = EvaluationStatus::Rejected;
    let runs = vec![scored.clone(), scored.clone(), rejected];
    let err = aggregate_results(&runs).unwrap_err().to_string();
    assert!(err.contains("Rejected"), "{err}");
    let agg = aggregate_results(&[scored.clone()]).unwrap();
    assert_eq!(agg.median, scored.mean_auc.unwrap());
    assert_eq!(agg.mad, 0.0);
}

#[test]
fn tampered_values_decode_as_violations() {
    let (_, predictor) = fixture();
    let req = toxbench_core::protocol::PredictRequest::new(vec!["CCO".into(), "c1ccccc1".into()]).unwrap();
    let mut value: serde_json::Value =
        serde_json::from_str(&encode_response(&predictor.handle_predict(&req).response)).unwrap();
    value["predictions"]["CCO"]["NR-AR"] = serde_json::json!(1.5);
    let resp = decode_response(&value.to_string()).unwrap();
    let report = toxbench_core::protocol::validate_response(&req, &resp);
    assert_eq!(report.count(ViolationKind::OutOfRange), 1);
}
