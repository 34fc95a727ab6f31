//! Prompt construction, reply parsing and rollout aggregation for querying a
//! text-completion model. No model ships here; callers supply a
//! [`CompletionClient`].

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Endpoint, ENDPOINT_COUNT};

pub const SYSTEM_TEXT: &str = "You are an expert in molecular toxicity prediction.\n\
Analyze molecules and provide probability scores between 0.000 and 1.000.\n\
Always respond with up to three decimal places.";

pub const USER_TEMPLATE: &str = "Analyze whether this molecule is likely to be toxic in the {target} assay.\n\
\n\
Target: {description}\n\
SMILES: {smiles}\n\
\n\
Provide only a probability between 0.000 and 1.000 indicating the likelihood of toxicity.\n\
Respond with only the number.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub system: String,
    /// Slots: `{target}`, `{description}`, `{smiles}`.
    pub user_template: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec { system: SYSTEM_TEXT.to_string(), user_template: USER_TEMPLATE.to_string() }
    }
}

/// `(system, user)` texts for one molecule and endpoint.
pub fn build_prompt(spec: &PromptSpec, endpoint: Endpoint, smiles: &str) -> (String, String) {
    assert!(!smiles.is_empty(), "SMILES must be non-empty");
    let user = spec
        .user_template
        .replace("{target}", endpoint.name())
        .replace("{description}", endpoint.description())
        .replace("{smiles}", smiles);
    (spec.system.clone(), user)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("reply is not a plain decimal number: {0:?}")]
    NotANumber(String),
    #[error("reply {0} is outside [0, 1]")]
    OutOfRange(String),
}

/// A single plain decimal such as `0.35`, `1` or `.5` in [0, 1], optionally
/// surrounded by whitespace.
pub fn parse_reply(text: &str) -> Result<f64, ReplyError> {
    let t = text.trim();
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if (int.is_empty() && frac.is_empty()) || !digits(int) || !digits(frac) {
        return Err(ReplyError::NotANumber(text.to_string()));
    }
    let v: f64 = t.parse().map_err(|_| ReplyError::NotANumber(text.to_string()))?;
    if v > 1.0 {
        return Err(ReplyError::OutOfRange(t.to_string()));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub rollouts: usize,
    /// Passed through to the client.
    pub temperature: f64,
    /// Only `"mean"` is defined.
    pub aggregation: String,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { rollouts: 5, temperature: 0.7, aggregation: "mean".to_string() }
    }
}

/// Arithmetic mean of successful rollouts; `None` when there are none.
pub fn aggregate_rollouts(values: &[f64], cfg: &RolloutConfig) -> Option<f64> {
    assert_eq!(cfg.aggregation, "mean", "unsupported rollout aggregation");
    if values.is_empty() {
        return None;
    }
    debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("completion failed: {0}")]
pub struct ClientError(pub String);

/// Sends one `(system, user)` prompt pair and returns the reply text.
pub trait CompletionClient {
    fn complete(&self, system: &str, user: &str, temperature: f64) -> Result<String, ClientError>;
}

/// Replays canned replies in order; errors once they run out.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    replies: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<(String, String)>>,
}

impl ScriptedClient {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        ScriptedClient { replies: Mutex::new(replies.into_iter().map(Into::into).collect()), prompts: Mutex::default() }
    }

    /// Prompt pairs received so far.
    pub fn prompts(&self) -> Vec<(String, String)> {
        self.prompts.lock().expect("lock").clone()
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, system: &str, user: &str, _temperature: f64) -> Result<String, ClientError> {
        self.prompts.lock().expect("lock").push((system.to_string(), user.to_string()));
        self.replies.lock().expect("lock").pop_front().ok_or_else(|| ClientError("script exhausted".into()))
    }
}

/// Queries every endpoint `cfg.rollouts` times. Failed or unparseable
/// rollouts are dropped; an endpoint with no usable rollout is `None`.
pub fn predict_with_client<C: CompletionClient + ?Sized>(
    client: &C,
    spec: &PromptSpec,
    cfg: &RolloutConfig,
    smiles: &str,
) -> [Option<f64>; ENDPOINT_COUNT] {
    let mut out = [None; ENDPOINT_COUNT];
    for e in Endpoint::ALL {
        let (system, user) = build_prompt(spec, e, smiles);
        let values: Vec<f64> = (0..cfg.rollouts)
            .filter_map(|_| client.complete(&system, &user, cfg.temperature).ok())
            .filter_map(|reply| parse_reply(&reply).ok())
            .collect();
        out[e.index()] = aggregate_rollouts(&values, cfg);
    }
    out
}
