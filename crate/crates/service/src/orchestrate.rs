//! Remote evaluation: deduplicate, batch, POST with retries, merge by SMILES,
//! validate full coverage and score.

use std::collections::HashMap;
use std::future::Future;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toxbench_core::dataset::{load_dataset_unfiltered, DatasetError, LabelMatrix, ENDPOINT_COUNT};
use toxbench_core::hash::sha256_hex;
use toxbench_core::metrics::{aggregate_runs, score_run, AggregateScore, EndpointScore};
use toxbench_core::protocol::{
    decode_response, encode_request, validate_response, PredictRequest, ValidationReport, Violation, ViolationKind,
};
use url::Url;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay_ms: 1000, factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt` (1-based); nothing before the first.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        let ms = self.base_delay_ms as f64 * self.factor.powi(attempt as i32 - 2);
        Duration::from_secs_f64(ms / 1e3)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    /// SHA-256 of the file, taken when the job is created.
    pub content_hash: String,
}

impl DatasetRef {
    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        let bytes = std::fs::read(path)?;
        Ok(DatasetRef { path: path.to_path_buf(), content_hash: sha256_hex(&bytes) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationJob {
    pub submission_id: Option<u64>,
    /// Full URL of the `/predict` endpoint.
    pub endpoint_url: Url,
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: f64,
    /// Batches in flight at once.
    pub concurrency: usize,
    pub dataset: DatasetRef,
}

impl EvaluationJob {
    pub fn new(endpoint_url: Url, dataset: DatasetRef) -> Self {
        EvaluationJob {
            submission_id: None,
            endpoint_url,
            batch_size: 64,
            retry: RetryPolicy::default(),
            timeout_secs: 120.0,
            concurrency: 4,
            dataset,
        }
    }
}

/// `<base>/predict` for a service root such as a Space URL.
pub fn predict_url(base: &Url) -> Result<Url, url::ParseError> {
    let mut s = base.as_str().trim_end_matches('/').to_string();
    if !s.ends_with("/predict") {
        s.push_str("/predict");
    }
    Url::parse(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationStatus {
    Scored,
    Rejected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub batch: usize,
    pub attempt: u32,
    /// Backoff waited before this attempt.
    pub waited_ms: u64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    pub slowest_batch_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub status: EvaluationStatus,
    pub per_endpoint: Vec<EndpointScore>,
    pub mean_auc: Option<f64>,
    pub rows: usize,
    pub unique_smiles: usize,
    pub batch_size: usize,
    pub request_count: usize,
    pub validation: ValidationReport,
    pub failure: Option<String>,
    pub attempts: Vec<AttemptRecord>,
    pub timings: Timings,
    pub dataset_hash: String,
    pub endpoint_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
}

impl CallError {
    /// Transport failures, throttling and server errors are worth retrying;
    /// other client errors are not.
    pub fn retryable(&self) -> bool {
        match self {
            CallError::Transport(_) => true,
            CallError::Status { status, .. } => *status == 429 || *status >= 500,
        }
    }
}

/// Sends one encoded request body and returns the response body.
pub trait PredictClient: Sync {
    fn post(&self, url: &Url, body: String, timeout: Duration) -> impl Future<Output = Result<String, CallError>> + Send;
}

#[derive(Debug, Clone, Default)]
pub struct HttpClient(reqwest::Client);

impl HttpClient {
    pub fn new() -> Self {
        Self::default()
    }
}

impl PredictClient for HttpClient {
    async fn post(&self, url: &Url, body: String, timeout: Duration) -> Result<String, CallError> {
        let resp = self
            .0
            .post(url.clone())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .timeout(timeout)
            .send()
            .await
            .map_err(|e| CallError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| CallError::Transport(e.to_string()))?;
        if status.is_success() {
            Ok(text)
        } else {
            Err(CallError::Status { status: status.as_u16(), body: text.chars().take(500).collect() })
        }
    }
}

/// Unique SMILES in first-occurrence order, and each row's index into them.
pub fn dedupe(smiles: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut unique = Vec::new();
    let rows = smiles
        .iter()
        .map(|s| {
            *index.entry(s.as_str()).or_insert_with(|| {
                unique.push(s.clone());
                unique.len() - 1
            })
        })
        .collect();
    (unique, rows)
}

/// Contiguous chunks of at most `batch_size` covering `0..len` once.
pub fn plan_batches(len: usize, batch_size: usize) -> Vec<Range<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    (0..len).step_by(batch_size).map(|start| start..(start + batch_size).min(len)).collect()
}

struct BatchOutcome {
    index: usize,
    body: Result<String, CallError>,
    attempts: Vec<AttemptRecord>,
    elapsed: Duration,
}

async fn send_with_retry<C: PredictClient>(client: &C, job: &EvaluationJob, index: usize, body: String) -> BatchOutcome {
    let started = Instant::now();
    let timeout = Duration::from_secs_f64(job.timeout_secs);
    let mut attempts = Vec::new();
    let mut attempt = 1;
    loop {
        let wait = job.retry.delay_before(attempt);
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
        let result = client.post(&job.endpoint_url, body.clone(), timeout).await;
        attempts.push(AttemptRecord {
            batch: index,
            attempt,
            waited_ms: wait.as_millis() as u64,
            outcome: match &result {
                Ok(_) => "ok".to_string(),
                Err(e) => e.to_string(),
            },
        });
        match result {
            Err(e) if e.retryable() && attempt < job.retry.max_attempts => attempt += 1,
            body => return BatchOutcome { index, body, attempts, elapsed: started.elapsed() },
        }
    }
}

fn base_result(job: &EvaluationJob, dataset: &LabelMatrix, unique: usize) -> EvaluationResult {
    EvaluationResult {
        status: EvaluationStatus::Failed,
        per_endpoint: Vec::new(),
        mean_auc: None,
        rows: dataset.len(),
        unique_smiles: unique,
        batch_size: job.batch_size,
        request_count: 0,
        validation: ValidationReport { ok: true, violations: Vec::new() },
        failure: None,
        attempts: Vec::new(),
        timings: Timings { total_ms: 0.0, slowest_batch_ms: 0.0 },
        dataset_hash: job.dataset.content_hash.clone(),
        endpoint_url: job.endpoint_url.to_string(),
    }
}

/// Evaluates an in-memory dataset. The dataset reference in `job` is
/// recorded but not re-read; see [`run_evaluation`].
pub async fn evaluate_dataset<C: PredictClient>(job: &EvaluationJob, dataset: &LabelMatrix, client: &C) -> EvaluationResult {
    let started = Instant::now();
    let (unique, row_index) = dedupe(dataset.smiles());
    let mut result = base_result(job, dataset, unique.len());
    let finish = |mut r: EvaluationResult, status, failure: Option<String>| {
        r.status = status;
        r.failure = failure;
        r.timings.total_ms = started.elapsed().as_secs_f64() * 1e3;
        r
    };
    if dataset.is_empty() {
        return finish(result, EvaluationStatus::Failed, Some("dataset is empty".into()));
    }
    if job.batch_size == 0 || job.concurrency == 0 {
        return finish(result, EvaluationStatus::Failed, Some("batch size and concurrency must be positive".into()));
    }
    let batches = plan_batches(unique.len(), job.batch_size);
    let requests: Vec<PredictRequest> =
        batches.iter().map(|r| PredictRequest { smiles: unique[r.clone()].to_vec() }).collect();
    let calls: Vec<_> =
        requests.iter().enumerate().map(|(i, req)| send_with_retry(client, job, i, encode_request(req))).collect();
    let mut outcomes: Vec<BatchOutcome> = stream::iter(calls)
        .buffer_unordered(job.concurrency)
        .collect()
        .await;
    outcomes.sort_by_key(|o| o.index);
    result.request_count = outcomes.iter().map(|o| o.attempts.len()).sum();
    result.attempts = outcomes.iter().flat_map(|o| o.attempts.iter().cloned()).collect();
    result.timings.slowest_batch_ms = outcomes.iter().map(|o| o.elapsed.as_secs_f64() * 1e3).fold(0.0, f64::max);
    if let Some((o, e)) = outcomes.iter().find_map(|o| o.body.as_ref().err().map(|e| (o, e))) {
        let attempts = o.attempts.len();
        return finish(result, EvaluationStatus::Failed, Some(format!("batch {} failed after {attempts} attempt(s): {e}", o.index)));
    }

    let mut merged: HashMap<&str, [f64; ENDPOINT_COUNT]> = HashMap::with_capacity(unique.len());
    let mut violations = Vec::new();
    for (o, req) in outcomes.iter().zip(&requests) {
        let body = o.body.as_ref().expect("failures handled above");
        match decode_response(body) {
            Err(e) => violations.push(Violation {
                kind: ViolationKind::Malformed,
                smiles: None,
                endpoint: None,
                detail: format!("batch {}: {e}", o.index),
            }),
            Ok(resp) => {
                violations.extend(validate_response(req, &resp).violations);
                for s in &req.smiles {
                    if let Some(p) = resp.probabilities(s) {
                        merged.insert(s.as_str(), p);
                    }
                }
            }
        }
    }
    if !violations.is_empty() {
        result.validation = ValidationReport { ok: false, violations };
        let n = result.validation.violations.len();
        return finish(result, EvaluationStatus::Rejected, Some(format!("{n} validation violation(s)")));
    }
    let predictions: Vec<[f64; ENDPOINT_COUNT]> = row_index.iter().map(|&u| merged[unique[u].as_str()]).collect();
    match score_run(&predictions, dataset) {
        Ok(score) => {
            result.per_endpoint = score.per_endpoint;
            result.mean_auc = Some(score.mean_auc);
            finish(result, EvaluationStatus::Scored, None)
        }
        Err(e) => finish(result, EvaluationStatus::Failed, Some(format!("scoring failed: {e}"))),
    }
}

#[derive(Debug, Error)]
pub enum DatasetCheckError {
    #[error(transparent)]
    Load(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset {path} changed: job recorded {expected}, file now hashes to {found}")]
    Changed { path: PathBuf, expected: String, found: String },
}

fn verify_dataset(job: &EvaluationJob) -> Result<(), DatasetCheckError> {
    let path = &job.dataset.path;
    let bytes = std::fs::read(path).map_err(|source| DatasetCheckError::Io { path: path.clone(), source })?;
    let found = sha256_hex(&bytes);
    if found != job.dataset.content_hash {
        return Err(DatasetCheckError::Changed { path: path.clone(), expected: job.dataset.content_hash.clone(), found });
    }
    Ok(())
}

/// Loads the job's dataset (every row, verbatim), checks it against the
/// recorded hash, evaluates, and checks the hash again before reporting a
/// score.
pub async fn run_evaluation<C: PredictClient>(job: &EvaluationJob, client: &C) -> EvaluationResult {
    let failed = |message: String| {
        let mut r = base_result(job, &LabelMatrix::new(vec![], vec![], vec![]).expect("empty matrix"), 0);
        r.failure = Some(message);
        r
    };
    if let Err(e) = verify_dataset(job) {
        return failed(e.to_string());
    }
    let dataset = match load_dataset_unfiltered(&job.dataset.path) {
        Ok((m, _)) => m,
        Err(e) => return failed(e.to_string()),
    };
    let mut result = evaluate_dataset(job, &dataset, client).await;
    if result.status == EvaluationStatus::Scored {
        if let Err(e) = verify_dataset(job) {
            result.status = EvaluationStatus::Failed;
            result.failure = Some(e.to_string());
        }
    }
    result
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RerunError {
    #[error("no runs")]
    Empty,
    #[error("aggregation refused, run statuses: {statuses:?}")]
    NotScored { statuses: Vec<EvaluationStatus> },
}

/// Median and MAD of run means; refuses unless every run was scored.
pub fn aggregate_results(runs: &[EvaluationResult]) -> Result<AggregateScore, RerunError> {
    if runs.is_empty() {
        return Err(RerunError::Empty);
    }
    let means: Option<Vec<f64>> =
        runs.iter().map(|r| (r.status == EvaluationStatus::Scored).then_some(r.mean_auc).flatten()).collect();
    match means {
        Some(m) => Ok(aggregate_runs(&m).expect("scored means are finite")),
        None => Err(RerunError::NotScored { statuses: runs.iter().map(|r| r.status).collect() }),
    }
}

/// Evaluates one job per model variant (typically one per training seed),
/// in order, and aggregates their mean AUCs.
pub async fn rerun_protocol<C: PredictClient>(
    jobs: &[EvaluationJob],
    client: &C,
) -> (Vec<EvaluationResult>, Result<AggregateScore, RerunError>) {
    let mut runs = Vec::with_capacity(jobs.len());
    for job in jobs {
        runs.push(run_evaluation(job, client).await);
    }
    let aggregate = aggregate_results(&runs);
    (runs, aggregate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches() {
        let b = plan_batches(647, 64);
        assert_eq!(b.len(), 11);
        assert_eq!(b.last().unwrap().len(), 7);
        assert_eq!(plan_batches(645, 64).last().unwrap().len(), 5);
        assert_eq!(plan_batches(10, 64), vec![0..10]);
        assert!(plan_batches(0, 3).is_empty());
    }

    #[test]
    fn dedupe_keeps_first() {
        let s: Vec<String> = ["a", "b", "a", "c", "b"].iter().map(|x| x.to_string()).collect();
        let (u, idx) = dedupe(&s);
        assert_eq!(u, vec!["a", "b", "c"]);
        assert_eq!(idx, vec![0, 1, 0, 2, 1]);
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let waits: Vec<u128> = (1..=3).map(|a| p.delay_before(a).as_millis()).collect();
        assert_eq!(waits, vec![0, 1000, 2000]);
    }

    #[test]
    fn predict_url_joins() {
        let u = |s: &str| predict_url(&Url::parse(s).unwrap()).unwrap().to_string();
        assert_eq!(u("https://x.hf.space"), "https://x.hf.space/predict");
        assert_eq!(u("https://x.hf.space/api/"), "https://x.hf.space/api/predict");
        assert_eq!(u("http://h:1/predict"), "http://h:1/predict");
    }
}
