//! Submission registry: model cards, the verification lifecycle, an
//! append-only event log and the leaderboard API.
//!
//! The log is JSON lines, one event per line:
//! `{"seq": 1, "at": "<RFC 3339>", "event": "submission_created", "id": 1, "card": {...}}`.
//! Other events are `evaluation_started {id}`, `result_attached {id, record}`
//! and `reviewed {id, decision, reviewer, note}`. State is rebuilt by
//! replaying the log from the first line.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use toxbench_core::hash::sha256_hex;
use tower_http::services::ServeDir;
use url::Url;

use crate::error_response;
use crate::orchestrate::{predict_url, run_evaluation, DatasetRef, EvaluationJob, EvaluationResult, EvaluationStatus, HttpClient, RetryPolicy};

pub const ADMIN_TOKEN_ENV: &str = "TOXBENCH_ADMIN_TOKEN";
pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCard {
    pub model_name: String,
    pub developer: String,
    pub paper_url: String,
    pub architecture: String,
    pub inference_notes: String,
    pub model_version: String,
    pub model_date: String,
    pub reproducibility_statement: String,
    pub intended_use: String,
    pub metric: String,
    pub training_data: String,
    pub evaluation_data: String,
    pub space_url: String,
    pub commit_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl ModelCard {
    pub const REQUIRED: [&'static str; 6] =
        ["model_name", "developer", "architecture", "model_version", "space_url", "commit_hash"];

    fn field(&self, name: &str) -> &str {
        match name {
            "model_name" => &self.model_name,
            "developer" => &self.developer,
            "architecture" => &self.architecture,
            "model_version" => &self.model_version,
            "space_url" => &self.space_url,
            "commit_hash" => &self.commit_hash,
            _ => unreachable!("not a required field"),
        }
    }

    /// Every problem with the card, one entry per field.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errors: Vec<FieldError> = Self::REQUIRED
            .iter()
            .filter(|f| self.field(f).trim().is_empty())
            .map(|f| FieldError { field: f.to_string(), message: "required field is missing or empty".into() })
            .collect();
        if !self.space_url.trim().is_empty() {
            if let Err(e) = Url::parse(&self.space_url) {
                errors.push(FieldError { field: "space_url".into(), message: format!("not a valid URL: {e}") });
            }
        }
        errors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Evaluating,
    Preliminary,
    Approved,
    Rejected,
    Failed,
}

impl Status {
    pub const ALL: [Status; 6] =
        [Status::Pending, Status::Evaluating, Status::Preliminary, Status::Approved, Status::Rejected, Status::Failed];

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Approved | Status::Rejected | Status::Failed)
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Evaluating => "evaluating",
            Status::Preliminary => "preliminary",
            Status::Approved => "approved",
            Status::Rejected => "rejected",
            Status::Failed => "failed",
        }
    }

    pub fn from_name(s: &str) -> Option<Status> {
        Status::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

/// An evaluation outcome as stored; never modified once written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub submission_id: u64,
    pub record_version: u32,
    pub result: EvaluationResult,
    pub dataset_hash: String,
    pub platform: String,
    pub created_at: DateTime<Utc>,
}

impl ResultRecord {
    pub fn content_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("record serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    SubmissionCreated { id: u64, card: ModelCard },
    EvaluationStarted { id: u64 },
    ResultAttached { id: u64, record: ResultRecord },
    Reviewed { id: u64, decision: Decision, reviewer: String, note: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub status: Status,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub decision: Decision,
    pub reviewer: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: u64,
    pub card: ModelCard,
    pub status: Status,
    /// Index into the state's result records and that record's content hash.
    pub result: Option<(usize, String)>,
    pub review: Option<Review>,
    pub transitions: Vec<Transition>,
}

impl Submission {
    pub fn submitted_at(&self) -> DateTime<Utc> {
        self.transitions[0].at
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("submission {0} not found")]
    NotFound(u64),
    #[error("submission {id} is {from:?}; cannot {action}")]
    IllegalTransition { id: u64, from: Status, action: &'static str },
    #[error("invalid model card: {}", .0.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
    InvalidCard(Vec<FieldError>),
    #[error("reviewer must be named")]
    EmptyReviewer,
    #[error("event {found} out of sequence (expected {expected})")]
    Sequence { expected: u64, found: u64 },
    #[error("event log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("admin token required for statuses other than approved")]
    Forbidden,
}

/// Everything queryable, derived from the event log alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegistryState {
    pub submissions: BTreeMap<u64, Submission>,
    pub results: Vec<ResultRecord>,
    pub last_seq: u64,
}

impl RegistryState {
    pub fn next_id(&self) -> u64 {
        self.submissions.keys().next_back().map_or(1, |id| id + 1)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn state_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("state serializes"))
    }

    fn get_mut(&mut self, id: u64) -> Result<&mut Submission, RegistryError> {
        self.submissions.get_mut(&id).ok_or(RegistryError::NotFound(id))
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), RegistryError> {
        if event.seq != self.last_seq + 1 {
            return Err(RegistryError::Sequence { expected: self.last_seq + 1, found: event.seq });
        }
        let at = event.at;
        let require = |s: &Submission, from: Status, action: &'static str| {
            if s.status == from {
                Ok(())
            } else {
                Err(RegistryError::IllegalTransition { id: s.id, from: s.status, action })
            }
        };
        match &event.kind {
            EventKind::SubmissionCreated { id, card } => {
                if *id != self.next_id() {
                    return Err(RegistryError::Corrupt { line: event.seq as usize, message: format!("unexpected id {id}") });
                }
                let errors = card.validate();
                if !errors.is_empty() {
                    return Err(RegistryError::InvalidCard(errors));
                }
                self.submissions.insert(
                    *id,
                    Submission {
                        id: *id,
                        card: card.clone(),
                        status: Status::Pending,
                        result: None,
                        review: None,
                        transitions: vec![Transition { status: Status::Pending, at }],
                    },
                );
            }
            EventKind::EvaluationStarted { id } => {
                let s = self.get_mut(*id)?;
                require(s, Status::Pending, "start evaluation")?;
                s.status = Status::Evaluating;
                s.transitions.push(Transition { status: Status::Evaluating, at });
            }
            EventKind::ResultAttached { id, record } => {
                let index = self.results.len();
                let s = self.get_mut(*id)?;
                require(s, Status::Evaluating, "attach a result")?;
                if record.submission_id != *id {
                    return Err(RegistryError::Corrupt {
                        line: event.seq as usize,
                        message: format!("record for {} attached to {id}", record.submission_id),
                    });
                }
                let status = match record.result.status {
                    EvaluationStatus::Scored => Status::Preliminary,
                    EvaluationStatus::Rejected => Status::Rejected,
                    EvaluationStatus::Failed => Status::Failed,
                };
                s.status = status;
                s.result = Some((index, record.content_hash()));
                s.transitions.push(Transition { status, at });
                self.results.push(record.clone());
            }
            EventKind::Reviewed { id, decision, reviewer, note } => {
                let s = self.get_mut(*id)?;
                require(s, Status::Preliminary, "review")?;
                if reviewer.trim().is_empty() {
                    return Err(RegistryError::EmptyReviewer);
                }
                let status = match decision {
                    Decision::Approve => Status::Approved,
                    Decision::Reject => Status::Rejected,
                };
                s.status = status;
                s.review = Some(Review { decision: *decision, reviewer: reviewer.clone(), note: note.clone() });
                s.transitions.push(Transition { status, at });
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<RegistryState, RegistryError> {
        let mut state = RegistryState::default();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn result_of(&self, s: &Submission) -> Option<&ResultRecord> {
        s.result.as_ref().map(|(i, _)| &self.results[*i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    MeanAuc,
    Date,
    Name,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeaderboardQuery {
    /// Comma-separated statuses; approved only when absent.
    pub status: Option<String>,
    pub sort: Option<SortKey>,
    pub dir: Option<Direction>,
    /// Case-insensitive substring of model name or developer.
    pub q: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub id: u64,
    pub model_name: String,
    pub developer: String,
    pub model_version: String,
    pub status: Status,
    pub mean_auc: Option<f64>,
    pub per_endpoint: BTreeMap<String, f64>,
    pub submitted_at: DateTime<Utc>,
    pub space_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown status {0:?}")]
pub struct UnknownStatus(pub String);

impl LeaderboardQuery {
    pub fn statuses(&self) -> Result<Vec<Status>, UnknownStatus> {
        match self.status.as_deref().map(str::trim) {
            None | Some("") => Ok(vec![Status::Approved]),
            Some(list) => list
                .split(',')
                .map(|s| Status::from_name(s.trim()).ok_or_else(|| UnknownStatus(s.to_string())))
                .collect(),
        }
    }
}

/// Filtered and ordered rows. Ties always go to the earlier submission.
pub fn query_leaderboard(state: &RegistryState, statuses: &[Status], query: &LeaderboardQuery) -> Vec<LeaderboardRow> {
    let needle = query.q.as_deref().map(str::to_lowercase).filter(|q| !q.is_empty());
    let mut rows: Vec<LeaderboardRow> = state
        .submissions
        .values()
        .filter(|s| statuses.contains(&s.status))
        .filter(|s| {
            needle.as_ref().is_none_or(|q| {
                s.card.model_name.to_lowercase().contains(q) || s.card.developer.to_lowercase().contains(q)
            })
        })
        .map(|s| {
            let result = state.result_of(s).map(|r| &r.result);
            LeaderboardRow {
                id: s.id,
                model_name: s.card.model_name.clone(),
                developer: s.card.developer.clone(),
                model_version: s.card.model_version.clone(),
                status: s.status,
                mean_auc: result.and_then(|r| r.mean_auc),
                per_endpoint: result
                    .map(|r| r.per_endpoint.iter().map(|e| (e.endpoint.name().to_string(), e.auc)).collect())
                    .unwrap_or_default(),
                submitted_at: s.submitted_at(),
                space_url: s.card.space_url.clone(),
            }
        })
        .collect();
    let key = query.sort.unwrap_or_default();
    let dir = query.dir.unwrap_or(match key {
        SortKey::MeanAuc | SortKey::Date => Direction::Desc,
        SortKey::Name => Direction::Asc,
    });
    rows.sort_by(|a, b| {
        let primary = match key {
            // rows without a score sort after every scored row
            SortKey::MeanAuc => match (a.mean_auc, b.mean_auc) {
                (Some(x), Some(y)) => {
                    let o = x.total_cmp(&y);
                    if dir == Direction::Desc { o.reverse() } else { o }
                }
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            },
            SortKey::Date => {
                let o = a.submitted_at.cmp(&b.submitted_at);
                if dir == Direction::Desc { o.reverse() } else { o }
            }
            SortKey::Name => {
                let o = a.model_name.to_lowercase().cmp(&b.model_name.to_lowercase());
                if dir == Direction::Desc { o.reverse() } else { o }
            }
        };
        primary.then(a.id.cmp(&b.id))
    });
    rows
}

/// Identifies where a result was computed.
pub fn platform_fingerprint() -> String {
    format!("{}-{} toxbench/{}", std::env::consts::OS, std::env::consts::ARCH, env!("CARGO_PKG_VERSION"))
}

/// The event log plus the state it replays to. Mutations are serialised
/// through one writer; readers take cheap snapshots.
#[derive(Debug)]
pub struct Registry {
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    state: RwLock<Arc<RegistryState>>,
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, RegistryError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(RegistryError::Io { path: path.to_path_buf(), source }),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| RegistryError::Corrupt { line: i + 1, message: e.to_string() })?);
    }
    Ok(events)
}

impl Registry {
    /// A registry without persistence.
    pub fn in_memory() -> Self {
        Registry { path: None, writer: Mutex::new(None), state: RwLock::new(Arc::default()) }
    }

    /// Replays `path` (created if absent) and appends to it from then on.
    pub fn open(path: &Path) -> Result<Self, RegistryError> {
        let state = RegistryState::replay(&read_events(path)?)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })?;
        Ok(Registry { path: Some(path.to_path_buf()), writer: Mutex::new(Some(file)), state: RwLock::new(Arc::new(state)) })
    }

    pub fn snapshot(&self) -> Arc<RegistryState> {
        Arc::clone(&self.state.read().expect("state lock"))
    }

    /// Builds the next event from the current state under the writer lock,
    /// applies it, persists it, then publishes the new state.
    fn commit(&self, make: impl FnOnce(&RegistryState) -> EventKind) -> Result<Arc<RegistryState>, RegistryError> {
        let mut writer = self.writer.lock().expect("writer lock");
        let current = self.snapshot();
        let event = Event { seq: current.last_seq + 1, at: Utc::now(), kind: make(&current) };
        let mut next = (*current).clone();
        next.apply(&event)?;
        if let Some(file) = writer.as_mut() {
            let path = self.path.clone().unwrap_or_default();
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|()| file.sync_data())
                .map_err(|source| RegistryError::Io { path, source })?;
        }
        let next = Arc::new(next);
        *self.state.write().expect("state lock") = Arc::clone(&next);
        Ok(next)
    }

    fn submission(state: &RegistryState, id: u64) -> Submission {
        state.submissions[&id].clone()
    }

    pub fn submit(&self, card: ModelCard) -> Result<Submission, RegistryError> {
        let errors = card.validate();
        if !errors.is_empty() {
            return Err(RegistryError::InvalidCard(errors));
        }
        let state = self.commit(|s| EventKind::SubmissionCreated { id: s.next_id(), card })?;
        let id = state.next_id() - 1;
        Ok(Self::submission(&state, id))
    }

    pub fn start_evaluation(&self, id: u64) -> Result<Submission, RegistryError> {
        let state = self.commit(|_| EventKind::EvaluationStarted { id })?;
        Ok(Self::submission(&state, id))
    }

    pub fn attach_result(&self, id: u64, result: EvaluationResult) -> Result<Submission, RegistryError> {
        let record = ResultRecord {
            submission_id: id,
            record_version: RECORD_VERSION,
            dataset_hash: result.dataset_hash.clone(),
            result,
            platform: platform_fingerprint(),
            created_at: Utc::now(),
        };
        let state = self.commit(|_| EventKind::ResultAttached { id, record })?;
        Ok(Self::submission(&state, id))
    }

    pub fn review(&self, id: u64, decision: Decision, reviewer: &str, note: &str) -> Result<Submission, RegistryError> {
        if reviewer.trim().is_empty() {
            return Err(RegistryError::EmptyReviewer);
        }
        let kind = EventKind::Reviewed { id, decision, reviewer: reviewer.to_string(), note: note.to_string() };
        let state = self.commit(|_| kind)?;
        Ok(Self::submission(&state, id))
    }

    pub fn get(&self, id: u64) -> Option<Submission> {
        self.snapshot().submissions.get(&id).cloned()
    }

    /// Statuses other than approved need `admin`.
    pub fn leaderboard(&self, query: &LeaderboardQuery, admin: bool) -> Result<Vec<LeaderboardRow>, LeaderboardError> {
        let statuses = query.statuses()?;
        if !admin && statuses.iter().any(|s| *s != Status::Approved) {
            return Err(LeaderboardError::Forbidden);
        }
        Ok(query_leaderboard(&self.snapshot(), &statuses, query))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LeaderboardError {
    #[error(transparent)]
    Status(#[from] UnknownStatus),
    #[error("admin token required for statuses other than approved")]
    Forbidden,
}

/// Settings for evaluating submissions against a held-out file.
#[derive(Debug, Clone)]
pub struct EvaluatorConfig {
    pub dataset: DatasetRef,
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: f64,
    pub concurrency: usize,
}

impl EvaluatorConfig {
    pub fn new(dataset: DatasetRef) -> Self {
        EvaluatorConfig { dataset, batch_size: 64, retry: RetryPolicy::default(), timeout_secs: 120.0, concurrency: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct RegistryService {
    pub registry: Arc<Registry>,
    /// `None` disables every admin action.
    pub admin_token: Option<String>,
    /// When set, new submissions are evaluated automatically.
    pub evaluator: Option<EvaluatorConfig>,
}

impl RegistryService {
    fn is_admin(&self, headers: &HeaderMap) -> bool {
        let Some(expected) = self.admin_token.as_deref().filter(|t| !t.is_empty()) else {
            return false;
        };
        let presented = headers.get(ADMIN_TOKEN_HEADER).and_then(|v| v.to_str().ok()).or_else(|| {
            headers
                .get(axum::http::header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
        });
        presented.is_some_and(|p| p.len() == expected.len() && p.bytes().zip(expected.bytes()).fold(0, |acc, (a, b)| acc | (a ^ b)) == 0)
    }

    /// Moves a pending submission through evaluation and attaches the result.
    pub async fn evaluate(&self, id: u64) -> Result<Submission, RegistryError> {
        let Some(cfg) = self.evaluator.clone() else {
            return Err(RegistryError::Corrupt { line: 0, message: "no evaluation dataset configured".into() });
        };
        let submission = self.registry.start_evaluation(id)?;
        let url = Url::parse(&submission.card.space_url).and_then(|u| predict_url(&u));
        let result = match url {
            Ok(endpoint_url) => {
                let job = EvaluationJob {
                    submission_id: Some(id),
                    endpoint_url,
                    batch_size: cfg.batch_size,
                    retry: cfg.retry,
                    timeout_secs: cfg.timeout_secs,
                    concurrency: cfg.concurrency,
                    dataset: cfg.dataset,
                };
                run_evaluation(&job, &HttpClient::new()).await
            }
            Err(e) => unreachable!("space_url validated at submission: {e}"),
        };
        tracing::info!(id, status = ?result.status, mean_auc = ?result.mean_auc, "evaluation finished");
        self.registry.attach_result(id, result)
    }
}

fn registry_error_response(e: &RegistryError) -> Response {
    match e {
        RegistryError::NotFound(_) => error_response(StatusCode::NOT_FOUND, None, &e.to_string()),
        RegistryError::IllegalTransition { .. } => error_response(StatusCode::CONFLICT, None, &e.to_string()),
        RegistryError::InvalidCard(fields) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": {"message": "invalid model card", "fields": fields}})),
        )
            .into_response(),
        RegistryError::EmptyReviewer => error_response(StatusCode::UNPROCESSABLE_ENTITY, Some("reviewer"), &e.to_string()),
        RegistryError::Forbidden => error_response(StatusCode::FORBIDDEN, None, &e.to_string()),
        other => {
            tracing::error!(error = %other, "registry failure");
            error_response(StatusCode::INTERNAL_SERVER_ERROR, None, "internal error")
        }
    }
}

fn unauthorized() -> Response {
    error_response(StatusCode::UNAUTHORIZED, None, "admin token required")
}

async fn create_submission(State(svc): State<RegistryService>, body: Bytes) -> Response {
    let card: ModelCard = match serde_json::from_slice(&body) {
        Ok(c) => c,
        Err(e) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, Some("."), &e.to_string()),
    };
    match svc.registry.submit(card) {
        Ok(s) => {
            if svc.evaluator.is_some() {
                let worker = svc.clone();
                let id = s.id;
                tokio::spawn(async move {
                    if let Err(e) = worker.evaluate(id).await {
                        tracing::error!(id, error = %e, "automatic evaluation failed");
                    }
                });
            }
            (StatusCode::CREATED, Json(s)).into_response()
        }
        Err(e) => registry_error_response(&e),
    }
}

async fn get_submission(State(svc): State<RegistryService>, UrlPath(id): UrlPath<u64>) -> Response {
    let state = svc.registry.snapshot();
    match state.submissions.get(&id) {
        Some(s) => Json(json!({"submission": s, "result": state.result_of(s)})).into_response(),
        None => registry_error_response(&RegistryError::NotFound(id)),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewBody {
    decision: Decision,
    reviewer: String,
    #[serde(default)]
    note: String,
}

async fn review_submission(
    State(svc): State<RegistryService>,
    UrlPath(id): UrlPath<u64>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if !svc.is_admin(&headers) {
        return unauthorized();
    }
    let body: ReviewBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, Some("."), &e.to_string()),
    };
    match svc.registry.review(id, body.decision, &body.reviewer, &body.note) {
        Ok(s) => Json(s).into_response(),
        Err(e) => registry_error_response(&e),
    }
}

async fn evaluate_submission(State(svc): State<RegistryService>, UrlPath(id): UrlPath<u64>, headers: HeaderMap) -> Response {
    if !svc.is_admin(&headers) {
        return unauthorized();
    }
    if svc.evaluator.is_none() {
        return error_response(StatusCode::CONFLICT, None, "no evaluation dataset configured");
    }
    match svc.evaluate(id).await {
        Ok(s) => Json(s).into_response(),
        Err(e) => registry_error_response(&e),
    }
}

async fn leaderboard(State(svc): State<RegistryService>, headers: HeaderMap, Query(q): Query<LeaderboardQuery>) -> Response {
    match svc.registry.leaderboard(&q, svc.is_admin(&headers)) {
        Ok(rows) => Json(rows).into_response(),
        Err(LeaderboardError::Forbidden) => error_response(StatusCode::FORBIDDEN, Some("status"), &LeaderboardError::Forbidden.to_string()),
        Err(e) => error_response(StatusCode::UNPROCESSABLE_ENTITY, Some("status"), &e.to_string()),
    }
}

async fn healthz(State(svc): State<RegistryService>) -> Json<serde_json::Value> {
    let state = svc.registry.snapshot();
    Json(json!({"status": "ok", "submissions": state.submissions.len(), "events": state.last_seq}))
}

/// Registry HTTP API, plus the static leaderboard UI under `/ui` when
/// `ui_dir` is given.
pub fn router(service: RegistryService, ui_dir: Option<&Path>) -> Router {
    let mut router = Router::new()
        .route("/submissions", post(create_submission))
        .route("/submissions/{id}", get(get_submission))
        .route("/submissions/{id}/review", post(review_submission))
        .route("/submissions/{id}/evaluate", post(evaluate_submission))
        .route("/leaderboard", get(leaderboard))
        .route("/healthz", get(healthz))
        .with_state(service);
    if let Some(dir) = ui_dir {
        router = router.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    router
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: RegistryService,
    ui_dir: Option<&Path>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service, ui_dir)).with_graceful_shutdown(shutdown).await
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn card(name: &str) -> ModelCard {
        ModelCard {
            model_name: name.into(),
            developer: "lab".into(),
            architecture: "linear".into(),
            model_version: "1".into(),
            space_url: "http://127.0.0.1:9/".into(),
            commit_hash: "abc123".into(),
            ..ModelCard::default()
        }
    }

    #[test]
    fn card_validation_itemizes() {
        let mut c = card("m");
        c.commit_hash.clear();
        c.space_url = "not a url".into();
        let errors = c.validate();
        let fields: Vec<&str> = errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, vec!["commit_hash", "space_url"]);
    }

    #[test]
    fn ids_increase_and_transitions_enforced() {
        let r = Registry::in_memory();
        let a = r.submit(card("a")).unwrap();
        let b = r.submit(card("b")).unwrap();
        assert!(b.id > a.id);
        assert_eq!(a.status, Status::Pending);
        assert!(matches!(r.review(a.id, Decision::Approve, "x", ""), Err(RegistryError::IllegalTransition { .. })));
        assert!(matches!(r.start_evaluation(99), Err(RegistryError::NotFound(99))));
    }

    #[test]
    fn statuses_parse() {
        let q = LeaderboardQuery { status: Some("approved, preliminary".into()), ..Default::default() };
        assert_eq!(q.statuses().unwrap(), vec![Status::Approved, Status::Preliminary]);
        assert!(LeaderboardQuery { status: Some("gone".into()), ..Default::default() }.statuses().is_err());
        assert_eq!(LeaderboardQuery::default().statuses().unwrap(), vec![Status::Approved]);
    }
}
