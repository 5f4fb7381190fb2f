//! Softmax regression and a one-hidden-layer ReLU MLP trained with
//! importance-weighted mini-batch SGD.
//!
//! Parameters live in one flat buffer, layer by layer, each layer stored as a
//! row-major `out x in` weight block followed by its `out` biases. Gradients
//! use the same layout.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Losses above this are treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.input * self.output;
        start..start + self.output
    }

    fn len(&self) -> usize {
        self.input * self.output + self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    input_dim: usize,
    num_classes: usize,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Which label `evaluate_accuracy` compares predictions against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Noisy,
    True,
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture, input_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::Config(format!(
                "model needs input_dim > 0 and >= 2 classes (got {input_dim}, {num_classes})"
            )));
        }
        let dims = match arch {
            Architecture::Linear => vec![(input_dim, num_classes)],
            Architecture::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::Config("mlp hidden width must be > 0".into()));
                }
                vec![(input_dim, hidden), (hidden, num_classes)]
            }
        };
        let mut offset = 0;
        let layers: Vec<LayerShape> = dims
            .into_iter()
            .map(|(input, output)| {
                let shape = LayerShape { input, output, offset };
                offset += shape.len();
                shape
            })
            .collect();
        Ok(Self {
            arch,
            input_dim,
            num_classes,
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, input_dim: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::zeros(arch, input_dim, num_classes)?;
        for layer in model.layers.clone() {
            let a = (6.0 / (layer.input + layer.output) as f64).sqrt();
            for w in &mut model.params[layer.weights()] {
                *w = rng.random_range(-a..a);
            }
        }
        Ok(model)
    }

    pub fn from_params(
        arch: Architecture,
        input_dim: usize,
        num_classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(arch, input_dim, num_classes)?;
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch {
                expected: model.params.len(),
                got: params.len(),
            });
        }
        model.params = params;
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn affine(&self, layer: &LayerShape, x: &[f64], out: &mut Vec<f64>) {
        let w = &self.params[layer.weights()];
        let b = &self.params[layer.bias()];
        out.clear();
        out.extend(w.chunks_exact(layer.input).zip(b).map(|(row, bias)| {
            row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + bias
        }));
    }

    /// Raw logits. For the MLP, also returns the hidden pre-activations.
    fn forward_full(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut logits = Vec::with_capacity(self.num_classes);
        match self.arch {
            Architecture::Linear => {
                self.affine(&self.layers[0], x, &mut logits);
                (logits, Vec::new())
            }
            Architecture::Mlp { .. } => {
                let mut hidden = Vec::new();
                self.affine(&self.layers[0], x, &mut hidden);
                let act: Vec<f64> = hidden.iter().map(|h| h.max(0.0)).collect();
                self.affine(&self.layers[1], &act, &mut logits);
                (logits, hidden)
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward_full(x).0)
    }

    /// Cross-entropy of the softmax against the sample's observed label.
    pub fn per_sample_loss(&self, sample: &Sample) -> Result<f64> {
        self.loss_for_label(sample.features(), sample.noisy_label())
    }

    pub fn loss_for_label(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check_label(label)?;
        Ok(cross_entropy(&self.forward(x)?, label))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Adds `scale * d loss / d params` into `grad` and returns the loss.
    fn accumulate_gradient(&self, x: &[f64], label: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let (logits, hidden) = self.forward_full(x);
        let loss = cross_entropy(&logits, label);
        if scale == 0.0 {
            return loss;
        }
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;

        let (out_layer, out_input) = match self.arch {
            Architecture::Linear => (self.layers[0], x.to_vec()),
            Architecture::Mlp { .. } => (self.layers[1], hidden.iter().map(|h| h.max(0.0)).collect()),
        };
        add_outer(grad, &out_layer, &dlogits, &out_input, scale);

        if let Architecture::Mlp { .. } = self.arch {
            let first = self.layers[0];
            let w2 = &self.params[out_layer.weights()];
            let mut dhidden = vec![0.0; first.output];
            for (row, g) in w2.chunks_exact(out_layer.input).zip(&dlogits) {
                for (dh, w) in dhidden.iter_mut().zip(row) {
                    *dh += g * w;
                }
            }
            for (dh, h) in dhidden.iter_mut().zip(&hidden) {
                if *h <= 0.0 {
                    *dh = 0.0;
                }
            }
            add_outer(grad, &first, &dhidden, x, scale);
        }
        loss
    }

    /// Mean weighted gradient `(1/|batch|) * sum w_i * grad loss_i`, plus the
    /// per-sample losses evaluated before any update.
    pub fn batch_gradient(&self, batch: &[(&Sample, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let mut losses = Vec::with_capacity(batch.len());
        if batch.is_empty() {
            return Ok((grad, losses));
        }
        let inv = 1.0 / batch.len() as f64;
        for (sample, weight) in batch {
            self.check_dim(sample.features())?;
            self.check_label(sample.noisy_label())?;
            if !(weight.is_finite() && *weight >= 0.0) {
                return Err(Error::InvalidInput(format!("sample weight must be finite and >= 0, got {weight}")));
            }
            let loss = self.accumulate_gradient(sample.features(), sample.noisy_label(), weight * inv, &mut grad);
            losses.push(loss);
        }
        Ok((grad, losses))
    }

    /// One importance-weighted SGD step. Returns the pre-update losses.
    ///
    /// Fails with `Error::Diverged` (epoch 0; the epoch loop fills in the
    /// real epoch) if a loss or gradient is non-finite or a loss exceeds
    /// [`DIVERGENCE_LOSS`].
    pub fn weighted_sgd_step(&mut self, batch: &[(&Sample, f64)], lr: f64) -> Result<Vec<f64>> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        let (grad, losses) = self.batch_gradient(batch)?;
        if let Some(bad) = losses.iter().find(|l| !l.is_finite() || **l > DIVERGENCE_LOSS) {
            return Err(Error::Diverged { epoch: 0, reason: format!("sample loss {bad}") });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch: 0, reason: "non-finite gradient".into() });
        }
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch: 0, reason: "non-finite parameters".into() });
        }
        Ok(losses)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Per-sample losses over a dataset, in id order.
    pub fn dataset_losses(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset
            .samples()
            .par_iter()
            .map(|s| self.per_sample_loss(s))
            .collect()
    }

    /// Mean loss over a dataset; summed serially so the result is reproducible.
    pub fn mean_loss(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let losses = self.dataset_losses(dataset)?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

fn add_outer(grad: &mut [f64], layer: &LayerShape, delta: &[f64], input: &[f64], scale: f64) {
    let (w, rest) = grad[layer.offset..layer.offset + layer.len()].split_at_mut(layer.input * layer.output);
    for ((row, d), b) in w.chunks_exact_mut(layer.input).zip(delta).zip(rest.iter_mut()) {
        let sd = scale * d;
        for (g, xi) in row.iter_mut().zip(input) {
            *g += sd * xi;
        }
        *b += sd;
    }
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| (z - lse).exp()).collect()
}

/// `-log softmax(logits)[label]`, clamped at zero against rounding.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    (log_sum_exp(logits) - logits[label]).max(0.0)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate_accuracy(model: &Model, dataset: &Dataset, source: LabelSource) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let hits: Vec<bool> = dataset
        .samples()
        .par_iter()
        .map(|s| {
            let label = match source {
                LabelSource::Noisy => s.noisy_label(),
                LabelSource::True => s.true_label(),
            };
            model.predict(s.features()).map(|p| p == label)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr * gamma^((epoch - 1) / every)`
    Step { every: usize, gamma: f64 },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub total_epochs: usize,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be > 0".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be > 0".into()));
        }
        if let LrSchedule::Step { every, gamma } = self.lr_schedule {
            if every == 0 || !(gamma.is_finite() && gamma > 0.0) {
                return Err(Error::Config("step schedule needs every > 0 and gamma > 0".into()));
            }
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Step { every, gamma } => self.lr * gamma.powi((epoch.saturating_sub(1) / every) as i32),
        }
    }
}

/// Trains one epoch over `kept` (ids into `dataset`) with per-sample weights.
///
/// The kept set is shuffled with `rng`, split into batches of
/// `batch_size` (last partial batch kept), and each batch gets one
/// weighted SGD step. Returns `(id, loss)` for every trained sample, where
/// the loss is the one observed in its training visit.
pub fn train_epoch(
    model: &mut Model,
    dataset: &Dataset,
    kept: &[usize],
    weights: &[f64],
    cfg: &TrainerConfig,
    epoch: usize,
    rng: &mut Rng,
) -> Result<Vec<(usize, f64)>> {
    if kept.len() != weights.len() {
        return Err(Error::Invariant("kept ids and weights differ in length".into()));
    }
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(rng);
    let lr = cfg.lr_at(epoch);
    let mut observed = Vec::with_capacity(kept.len());
    for chunk in order.chunks(cfg.batch_size) {
        let batch = chunk
            .iter()
            .map(|&k| Ok((dataset.get(kept[k])?, weights[k])))
            .collect::<Result<Vec<_>>>()?;
        let losses = model.weighted_sgd_step(&batch, lr).map_err(|e| match e {
            Error::Diverged { reason, .. } => Error::Diverged { epoch, reason },
            other => other,
        })?;
        observed.extend(chunk.iter().map(|&k| kept[k]).zip(losses));
    }
    Ok(observed)
}
