//! Reference baselines, their shared masked loss, and the on-disk artifact.

pub mod artifact;
pub mod knn;
pub mod linear;
pub mod llm;
mod loss;
mod optim;
pub mod snn;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{LabelRow, ENDPOINT_COUNT};

pub use artifact::{fit_artifact, Artifact, ArtifactError, Hyperparameters, Manifest, ModelSpec};
pub use knn::{knn_predict, tanimoto, KnnConfig, KnnModel};
pub use linear::{train_linear, LinearModel};
pub use llm::{aggregate_rollouts, build_prompt, parse_reply, CompletionClient, PromptSpec, RolloutConfig};
pub use loss::masked_bce;
pub use snn::{alpha_dropout, selu, train_snn, SnnConfig, SnnModel, SELU_ALPHA, SELU_LAMBDA};

/// Twelve per-endpoint values in endpoint order.
pub type Probabilities = [f64; ENDPOINT_COUNT];

/// Logistic link, written so that neither branch overflows.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Seeded mini-batch gradient descent settings shared by the trainable models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Coefficient of `l2 * |W|^2 / 2`; biases are not penalised.
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Heavy-ball momentum; 0 gives plain gradient descent.
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.003, l2: 1e-3, epochs: 60, batch_size: 32, momentum: 0.9, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no training rows")]
    Empty,
    #[error("{features} feature rows but {labels} label rows")]
    RowCount { features: usize, labels: usize },
    #[error("row {row} has width {found}, expected {expected}")]
    Width { row: usize, found: usize, expected: usize },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("training data has no present labels")]
    NoLabels,
    #[error("training diverged in epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Checks a feature matrix against its label rows and returns the width.
pub(crate) fn check_training_data<R: AsRef<[f64]>>(features: &[R], truth: &[LabelRow]) -> Result<usize, TrainError> {
    if features.is_empty() {
        return Err(TrainError::Empty);
    }
    if features.len() != truth.len() {
        return Err(TrainError::RowCount { features: features.len(), labels: truth.len() });
    }
    let width = features[0].as_ref().len();
    for (row, f) in features.iter().enumerate() {
        let f = f.as_ref();
        if f.len() != width {
            return Err(TrainError::Width { row, found: f.len(), expected: width });
        }
        if let Some(column) = f.iter().position(|x| !x.is_finite()) {
            return Err(TrainError::NonFiniteFeature { row, column });
        }
    }
    if truth.iter().all(|r| r.iter().all(Option::is_none)) {
        return Err(TrainError::NoLabels);
    }
    Ok(width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Snn,
    Knn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Snn => "snn",
            ModelKind::Knn => "knn",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "snn" => Ok(ModelKind::Snn),
            "knn" => Ok(ModelKind::Knn),
            other => Err(format!("unknown model kind {other:?} (expected linear, snn or knn)")),
        }
    }
}

/// A trained baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Snn(SnnModel),
    Knn(KnnModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Linear,
            Model::Snn(_) => ModelKind::Snn,
            Model::Knn(_) => ModelKind::Knn,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Model::Linear(m) => m.width,
            Model::Snn(m) => m.input_width(),
            Model::Knn(m) => m.width,
        }
    }

    pub fn pipeline_ref(&self) -> &str {
        match self {
            Model::Linear(m) => &m.pipeline_ref,
            Model::Snn(m) => &m.pipeline_ref,
            Model::Knn(m) => &m.pipeline_ref,
        }
    }

    /// Probabilities for one input row of [`Model::input_width`] values.
    pub fn predict(&self, input: &[f64]) -> Probabilities {
        match self {
            Model::Linear(m) => m.predict(input),
            Model::Snn(m) => m.predict(input),
            Model::Knn(m) => knn_predict(m, input).expect("input width checked by caller"),
        }
    }
}
