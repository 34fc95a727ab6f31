//! Self-normalizing feed-forward network: SELU hidden layers, alpha dropout,
//! an affine 12-logit output and the masked loss of the linear baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::optim::{shuffled_order, Momentum};
use super::{check_training_data, masked_bce, sigmoid, Probabilities, TrainConfig, TrainError};
use crate::dataset::{LabelRow, ENDPOINT_COUNT};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Affine correction `(a, b)` of alpha dropout at drop probability `rate`.
fn alpha_dropout_affine(rate: f64) -> (f64, f64) {
    let keep = 1.0 - rate;
    let saturation = -SELU_LAMBDA * SELU_ALPHA;
    let a = (keep + saturation * saturation * keep * rate).powf(-0.5);
    (a, -a * rate * saturation)
}

/// Draws a keep mask and applies alpha dropout in place; returns the mask.
fn alpha_dropout_in_place<R: Rng>(values: &mut [f64], rate: f64, rng: &mut R) -> Vec<bool> {
    if rate == 0.0 {
        return vec![true; values.len()];
    }
    let (a, b) = alpha_dropout_affine(rate);
    let saturation = -SELU_LAMBDA * SELU_ALPHA;
    values
        .iter_mut()
        .map(|v| {
            let keep = !rng.random_bool(rate);
            *v = a * if keep { *v } else { saturation } + b;
            keep
        })
        .collect()
}

/// Alpha dropout: dropped units take the SELU saturation value `-lambda alpha`,
/// then an affine map restores zero mean and unit variance. Identity at rate 0.
pub fn alpha_dropout(values: &[f64], rate: f64, seed: u64) -> Vec<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let mut out = values.to_vec();
    alpha_dropout_in_place(&mut out, rate, &mut ChaCha8Rng::seed_from_u64(seed));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub optimizer: TrainConfig,
}

impl Default for SnnConfig {
    fn default() -> Self {
        SnnConfig {
            hidden: vec![256, 256],
            dropout: 0.05,
            optimizer: TrainConfig { learning_rate: 0.005, l2: 1e-4, epochs: 30, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    /// Hidden layers followed by the 12-unit output layer.
    pub layers: Vec<DenseLayer>,
    /// Training-time alpha dropout rate on hidden activations.
    pub dropout: f64,
    pub pipeline_ref: String,
}

/// Per-layer gradients, same shapes as the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnGradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

struct Trace {
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Inputs to each layer (the network input first).
    inputs: Vec<Vec<f64>>,
    /// Keep masks of hidden layers.
    masks: Vec<Vec<bool>>,
    logits: Probabilities,
}

impl SnnModel {
    /// Weights drawn from N(0, 1/fan_in), biases zero.
    pub fn new(input: usize, hidden: &[usize], dropout: f64, seed: u64, pipeline_ref: impl Into<String>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &outputs in hidden.iter().chain(std::iter::once(&ENDPOINT_COUNT)) {
            let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive spread");
            layers.push(DenseLayer {
                inputs: fan_in,
                outputs,
                weights: (0..outputs * fan_in).map(|_| normal.sample(&mut rng)).collect(),
                bias: vec![0.0; outputs],
            });
            fan_in = outputs;
        }
        SnnModel { layers, dropout, pipeline_ref: pipeline_ref.into() }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    fn run<R: Rng>(&self, x: &[f64], mut dropout: Option<&mut R>) -> Trace {
        assert_eq!(x.len(), self.input_width(), "input width");
        let hidden = self.layers.len() - 1;
        let mut trace = Trace { pre: Vec::new(), inputs: vec![x.to_vec()], masks: Vec::new(), logits: [0.0; 12] };
        for layer in &self.layers[..hidden] {
            let z = layer.affine(trace.inputs.last().expect("input"));
            let mut h: Vec<f64> = z.iter().map(|&v| selu(v)).collect();
            let mask = match dropout.as_deref_mut() {
                Some(rng) => alpha_dropout_in_place(&mut h, self.dropout, rng),
                None => vec![true; h.len()],
            };
            trace.pre.push(z);
            trace.masks.push(mask);
            trace.inputs.push(h);
        }
        let out = self.layers[hidden].affine(trace.inputs.last().expect("input"));
        trace.logits = out.try_into().expect("12 outputs");
        trace
    }

    pub fn logits(&self, x: &[f64]) -> Probabilities {
        self.run::<ChaCha8Rng>(x, None).logits
    }

    /// Inference pass; dropout is inactive.
    pub fn predict(&self, x: &[f64]) -> Probabilities {
        self.logits(x).map(sigmoid)
    }

    /// Post-SELU activations of every hidden layer for each row.
    pub fn hidden_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut t = self.run::<ChaCha8Rng>(x, None);
        t.inputs.remove(0);
        t.inputs
    }

    /// Masked loss plus `l2 |W|^2 / 2` over all weight matrices and its
    /// gradient. With `dropout` set, masks are drawn from that generator.
    pub fn loss_and_gradient<X: AsRef<[f64]>, R: Rng>(
        &self,
        xs: &[X],
        truth: &[LabelRow],
        l2: f64,
        mut dropout: Option<&mut R>,
    ) -> (f64, SnnGradient) {
        let traces: Vec<Trace> = xs.iter().map(|x| self.run(x.as_ref(), dropout.as_deref_mut())).collect();
        let logits: Vec<Probabilities> = traces.iter().map(|t| t.logits).collect();
        let (data_loss, g_out) = masked_bce(&logits, truth);
        let mut grad = SnnGradient {
            weights: self.layers.iter().map(|l| l.weights.iter().map(|w| l2 * w).collect()).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        };
        let (a, _) = alpha_dropout_affine(self.dropout);
        let dropout_gain = if dropout.is_some() && self.dropout > 0.0 { a } else { 1.0 };
        for (trace, g) in traces.iter().zip(&g_out) {
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mut delta: Vec<f64> = g.to_vec();
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &trace.inputs[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad.bias[l][o] += d;
                    let row = &mut grad.weights[l][o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut back = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (b, w) in back.iter_mut().zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs]) {
                        *b += d * w;
                    }
                }
                for ((b, &z), &keep) in back.iter_mut().zip(&trace.pre[l - 1]).zip(&trace.masks[l - 1]) {
                    *b = if keep { *b * dropout_gain * selu_derivative(z) } else { 0.0 };
                }
                delta = back;
            }
        }
        let penalty: f64 = self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>() * 0.5 * l2;
        (data_loss + penalty, grad)
    }
}

/// Seeded mini-batch training of a freshly initialised network.
pub fn train_snn<R: AsRef<[f64]>>(
    features: &[R],
    truth: &[LabelRow],
    cfg: &SnnConfig,
    pipeline_ref: &str,
) -> Result<(SnnModel, f64), TrainError> {
    cfg.optimizer.validate()?;
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(TrainError::Config("dropout must lie in [0, 1)".into()));
    }
    if cfg.hidden.contains(&0) {
        return Err(TrainError::Config("hidden layer widths must be positive".into()));
    }
    let width = check_training_data(features, truth)?;
    let opt = &cfg.optimizer;
    let mut model = SnnModel::new(width, &cfg.hidden, cfg.dropout, opt.seed, pipeline_ref);
    // a second stream for batch order and dropout masks
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut opt_w: Vec<Momentum> = model.layers.iter().map(|l| Momentum::new(l.weights.len(), opt.momentum)).collect();
    let mut opt_b: Vec<Momentum> = model.layers.iter().map(|l| Momentum::new(l.outputs, opt.momentum)).collect();
    for epoch in 0..opt.epochs {
        let order = shuffled_order(features.len(), &mut rng);
        for (batch, idx) in order.chunks(opt.batch_size).enumerate() {
            let xs: Vec<&[f64]> = idx.iter().map(|&i| features[i].as_ref()).collect();
            let ys: Vec<LabelRow> = idx.iter().map(|&i| truth[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&xs, &ys, opt.l2, Some(&mut rng));
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, batch, loss });
            }
            for (l, layer) in model.layers.iter_mut().enumerate() {
                opt_w[l].step(&mut layer.weights, &grad.weights[l], opt.learning_rate);
                opt_b[l].step(&mut layer.bias, &grad.bias[l], opt.learning_rate);
            }
        }
    }
    let (loss, _) = model.loss_and_gradient::<_, ChaCha8Rng>(features, truth, opt.l2, None);
    if !loss.is_finite() {
        return Err(TrainError::Divergence { epoch: opt.epochs, batch: 0, loss });
    }
    Ok((model, loss))
}
