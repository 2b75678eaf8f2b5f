//! Multilayer perceptron: one ReLU hidden layer (1024 units by default),
//! softmax output, cross-entropy loss, plain mini-batch SGD.
//!
//! ReLU takes subgradient 0 at exactly 0, so a dead unit contributes no
//! gradient at all.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::features::{Dataset, FeatureVector};
use crate::matrix::Matrix;
use crate::{argmax, EpochStats, ModelError, TrainConfig};

pub const DEFAULT_HIDDEN: usize = 1024;

/// Guard inside the log so a zero probability cannot produce infinity.
pub const LOSS_EPSILON: f64 = 1e-12;

/// Weights are row-major: `w1` is `hidden x in_dim`, `w2` is
/// `n_classes x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn in_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.w2.rows()
    }
}

/// Same shapes as the model; used for accumulation across a mini-batch.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpGradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            w1: Matrix::zeros(model.w1.rows(), model.w1.cols()),
            b1: vec![0.0; model.b1.len()],
            w2: Matrix::zeros(model.w2.rows(), model.w2.cols()),
            b2: vec![0.0; model.b2.len()],
        }
    }

    fn clear(&mut self) {
        self.w1.as_mut_slice().fill(0.0);
        self.b1.fill(0.0);
        self.w2.as_mut_slice().fill(0.0);
        self.b2.fill(0.0);
    }
}

/// He-initialized weights, Normal(0, 2/fan_in); biases zero. The fill
/// order (w1 row-major, then w2 row-major) is fixed, so one seed always
/// produces the same parameters.
pub fn init(in_dim: usize, n_classes: usize, hidden: usize, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w1 = Matrix::zeros(hidden, in_dim);
    let he1 = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).unwrap();
    for v in w1.as_mut_slice() {
        *v = rng.sample(he1);
    }
    let mut w2 = Matrix::zeros(n_classes, hidden);
    let he2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).unwrap();
    for v in w2.as_mut_slice() {
        *v = rng.sample(he2);
    }
    MlpModel {
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; n_classes],
    }
}

/// Max-subtracted softmax: finite and summing to 1 for any finite logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

fn check_dim(model: &MlpModel, x: &[f64]) -> Result<(), ModelError> {
    if x.len() != model.in_dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "input has {} dims, model expects {}",
            x.len(),
            model.in_dim()
        )));
    }
    Ok(())
}

fn forward_cached(model: &MlpModel, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = model.hidden();
    let mut pre = model.b1.clone();
    for j in 0..hidden {
        let row = model.w1.row(j);
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        pre[j] += acc;
    }
    let h: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
    let mut logits = model.b2.clone();
    for c in 0..model.n_classes() {
        let row = model.w2.row(c);
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(&h) {
            acc += w * v;
        }
        logits[c] += acc;
    }
    let probs = softmax(&logits);
    (pre, h, probs)
}

/// Class probabilities for one input.
pub fn forward(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_dim(model, x)?;
    Ok(forward_cached(model, x).2)
}

/// Cross-entropy of the true class: `-ln(p + 1e-12)`.
pub fn loss(probs: &[f64], label: usize) -> f64 {
    -(probs[label] + LOSS_EPSILON).ln()
}

/// Adds this sample's gradients into `grads`; returns (loss, correct).
/// `backward` and the training loop share this single gradient path.
fn accumulate_gradients(
    model: &MlpModel,
    x: &[f64],
    label: usize,
    grads: &mut MlpGradients,
) -> (f64, bool) {
    let (pre, h, probs) = forward_cached(model, x);
    let sample_loss = loss(&probs, label);
    let correct = argmax(&probs) == label;

    let mut dlogits = probs;
    dlogits[label] -= 1.0;

    let mut dh = vec![0.0; h.len()];
    for (c, &dl) in dlogits.iter().enumerate() {
        let w_row = model.w2.row(c);
        let g_row = grads.w2.row_mut(c);
        for j in 0..h.len() {
            g_row[j] += dl * h[j];
            dh[j] += w_row[j] * dl;
        }
        grads.b2[c] += dl;
    }
    for j in 0..h.len() {
        // ReLU gate: strictly positive pre-activations pass gradient.
        let dpre = if pre[j] > 0.0 { dh[j] } else { 0.0 };
        if dpre != 0.0 {
            let g_row = grads.w1.row_mut(j);
            for (g, v) in g_row.iter_mut().zip(x) {
                *g += dpre * v;
            }
        }
        grads.b1[j] += dpre;
    }
    (sample_loss, correct)
}

/// Exact analytic gradients of the cross-entropy loss for one sample.
pub fn backward(model: &MlpModel, x: &[f64], label: usize) -> Result<MlpGradients, ModelError> {
    check_dim(model, x)?;
    let mut grads = MlpGradients::zeros_like(model);
    accumulate_gradients(model, x, label, &mut grads);
    Ok(grads)
}

/// Mini-batch SGD: per epoch, seeded shuffle, then for each batch
/// `p <- p - lr * mean gradient`. History records the running mean loss
/// seen during the epoch and the training accuracy of the epoch-end
/// parameters.
pub fn train(
    model: &mut MlpModel,
    ds: &Dataset<FeatureVector>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, ModelError> {
    if ds.items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch_size must be >= 1".to_string()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(ModelError::InvalidConfig(format!(
            "learning rate {} must be finite and >= 0",
            cfg.learning_rate
        )));
    }
    for item in &ds.items {
        check_dim(model, &item.values)?;
    }

    let n = ds.items.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut grads = MlpGradients::zeros_like(model);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let item = &ds.items[i];
                let (l, _) = accumulate_gradients(model, &item.values, item.label_index, &mut grads);
                loss_sum += l;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, g) in model.w1.as_mut_slice().iter_mut().zip(grads.w1.as_slice()) {
                *p -= step * g;
            }
            for (p, g) in model.b1.iter_mut().zip(&grads.b1) {
                *p -= step * g;
            }
            for (p, g) in model.w2.as_mut_slice().iter_mut().zip(grads.w2.as_slice()) {
                *p -= step * g;
            }
            for (p, g) in model.b2.iter_mut().zip(&grads.b2) {
                *p -= step * g;
            }
        }
        let correct = ds
            .items
            .iter()
            .filter(|item| argmax(&forward_cached(model, &item.values).2) == item.label_index)
            .count();
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            val_loss: None,
            val_accuracy: None,
        });
    }
    Ok(history)
}

/// Argmax of the forward probabilities; ties break to the lowest class.
pub fn predict(model: &MlpModel, x: &[f64]) -> Result<usize, ModelError> {
    Ok(argmax(&forward(model, x)?))
}
