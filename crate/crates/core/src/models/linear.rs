//! Masked multitask logistic regression.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{shuffled_order, Momentum};
use super::{check_training_data, masked_bce, sigmoid, Probabilities, TrainConfig, TrainError};
use crate::dataset::{LabelRow, ENDPOINT_COUNT};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub width: usize,
    /// `ENDPOINT_COUNT x width`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Content hash of the pipeline producing this model's inputs.
    pub pipeline_ref: String,
}

impl LinearModel {
    pub fn zeros(width: usize, pipeline_ref: impl Into<String>) -> Self {
        LinearModel {
            width,
            weights: vec![0.0; ENDPOINT_COUNT * width],
            bias: vec![0.0; ENDPOINT_COUNT],
            pipeline_ref: pipeline_ref.into(),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Probabilities {
        assert_eq!(x.len(), self.width, "input width");
        let mut z = [0.0; ENDPOINT_COUNT];
        for (k, zk) in z.iter_mut().enumerate() {
            let w = &self.weights[k * self.width..(k + 1) * self.width];
            *zk = self.bias[k] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        z
    }

    pub fn predict(&self, x: &[f64]) -> Probabilities {
        self.logits(x).map(sigmoid)
    }

    /// Masked loss plus `l2 |W|^2 / 2` over the given rows, with gradients
    /// for weights and bias.
    pub fn loss_and_gradient<R: AsRef<[f64]>>(
        &self,
        xs: &[R],
        truth: &[LabelRow],
        l2: f64,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let logits: Vec<Probabilities> = xs.iter().map(|x| self.logits(x.as_ref())).collect();
        let (data_loss, g) = masked_bce(&logits, truth);
        let mut gw: Vec<f64> = self.weights.iter().map(|w| l2 * w).collect();
        let mut gb = vec![0.0; ENDPOINT_COUNT];
        for (x, g_row) in xs.iter().zip(&g) {
            let x = x.as_ref();
            for (k, &gk) in g_row.iter().enumerate() {
                if gk == 0.0 {
                    continue;
                }
                gb[k] += gk;
                for (w, xi) in gw[k * self.width..(k + 1) * self.width].iter_mut().zip(x) {
                    *w += gk * xi;
                }
            }
        }
        let penalty = 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        (data_loss + penalty, gw, gb)
    }
}

/// Seeded mini-batch gradient descent from zero weights. Returns the model
/// and its final loss over the whole training set.
pub fn train_linear<R: AsRef<[f64]>>(
    features: &[R],
    truth: &[LabelRow],
    cfg: &TrainConfig,
    pipeline_ref: &str,
) -> Result<(LinearModel, f64), TrainError> {
    cfg.validate()?;
    let width = check_training_data(features, truth)?;
    let mut model = LinearModel::zeros(width, pipeline_ref);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_w = Momentum::new(model.weights.len(), cfg.momentum);
    let mut opt_b = Momentum::new(ENDPOINT_COUNT, cfg.momentum);
    let mut batch_x: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<LabelRow> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let order = shuffled_order(features.len(), &mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch_x.clear();
            batch_y.clear();
            for &i in idx {
                batch_x.push(features[i].as_ref());
                batch_y.push(truth[i]);
            }
            let (loss, gw, gb) = model.loss_and_gradient(&batch_x, &batch_y, cfg.l2);
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, batch, loss });
            }
            opt_w.step(&mut model.weights, &gw, cfg.learning_rate);
            opt_b.step(&mut model.bias, &gb, cfg.learning_rate);
        }
    }
    let (loss, _, _) = model.loss_and_gradient(features, truth, cfg.l2);
    if !loss.is_finite() || model.weights.iter().chain(&model.bias).any(|w| !w.is_finite()) {
        return Err(TrainError::Divergence { epoch: cfg.epochs, batch: 0, loss });
    }
    Ok((model, loss))
}
