//! From-scratch convolutional network for MFCC tensors:
//! conv(32,3x3) -> ReLU -> conv(64,3x3) -> ReLU -> maxpool(2x2) ->
//! flatten -> dense(256) -> ReLU -> dropout(0.3) -> dense(128) -> ReLU
//! -> dense(n_classes) -> softmax, trained with Adam on categorical
//! cross-entropy.
//!
//! Flatten order is the tensor storage order: channel-major, then row,
//! then column. Dropout is inverted (survivors scale by 1/(1-rate) at
//! train time, inference applies no mask), sits after the first dense
//! layer only, and every mask is seeded. All parameters live in one flat
//! vector with a fixed block layout, so the optimizer, gradient checks,
//! and persistence all see the same ordering.

pub mod adam;
pub mod ops;

use std::ops::Range;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::features::{Dataset, FeatureTensor};
use crate::matrix::Matrix;
use crate::mlp::{loss, softmax};
use crate::{argmax, derive_seed, EpochStats, ModelError, TrainConfig};

pub use adam::AdamState;
pub use ops::{
    conv2d_backward, conv2d_forward, maxpool_backward, maxpool_forward, Tensor3, KERNEL,
};

/// Architecture of one network. The input is always a single channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub n_classes: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    /// None removes the first dense layer and its dropout, leaving the
    /// smaller single-dense-head baseline.
    pub dense1_units: Option<usize>,
    pub dense2_units: usize,
    pub dropout_rate: f64,
}

impl CnnConfig {
    /// Two dense layers (256, 128) with dropout 0.3 between them.
    pub fn new(input_height: usize, input_width: usize, n_classes: usize) -> Self {
        Self {
            input_height,
            input_width,
            n_classes,
            conv1_filters: 32,
            conv2_filters: 64,
            dense1_units: Some(256),
            dense2_units: 128,
            dropout_rate: 0.3,
        }
    }

    /// Single dense head of 128 units, no dropout.
    pub fn baseline(input_height: usize, input_width: usize, n_classes: usize) -> Self {
        Self {
            dense1_units: None,
            dropout_rate: 0.0,
            ..Self::new(input_height, input_width, n_classes)
        }
    }

    /// Activation shapes implied by the input size; fails fast on inputs
    /// too small to survive two 3x3 convolutions and a 2x2 pool.
    pub fn dims(&self) -> Result<CnnDims, ModelError> {
        if self.n_classes == 0
            || self.conv1_filters == 0
            || self.conv2_filters == 0
            || self.dense2_units == 0
            || self.dense1_units == Some(0)
        {
            return Err(ModelError::InvalidConfig(
                "every layer needs at least one unit".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout rate {} is outside [0, 1)",
                self.dropout_rate
            )));
        }
        let (h, w) = (self.input_height, self.input_width);
        if h < 6 || w < 6 {
            return Err(ModelError::InputTooSmall(format!(
                "{h}x{w} input cannot pass two 3x3 convolutions and a 2x2 pool"
            )));
        }
        let conv1 = (self.conv1_filters, h - 2, w - 2);
        let conv2 = (self.conv2_filters, h - 4, w - 4);
        let pool = (self.conv2_filters, (h - 4) / 2, (w - 4) / 2);
        Ok(CnnDims {
            conv1,
            conv2,
            pool,
            flat_dim: pool.0 * pool.1 * pool.2,
        })
    }
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self::new(13, 130, 10)
    }
}

/// Per-layer activation shapes as (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnDims {
    pub conv1: (usize, usize, usize),
    pub conv2: (usize, usize, usize),
    pub pool: (usize, usize, usize),
    pub flat_dim: usize,
}

/// Offsets of each parameter block inside the flat vector. Block order:
/// conv1 kernels, conv1 biases, conv2 kernels, conv2 biases, dense1
/// weights, dense1 biases, dense2 weights, dense2 biases, output
/// weights, output biases. Absent dense1 blocks are empty ranges.
struct Layout {
    dims: CnnDims,
    conv1_w: Range<usize>,
    conv1_b: Range<usize>,
    conv2_w: Range<usize>,
    conv2_b: Range<usize>,
    dense1_w: Range<usize>,
    dense1_b: Range<usize>,
    dense2_w: Range<usize>,
    dense2_b: Range<usize>,
    out_w: Range<usize>,
    out_b: Range<usize>,
    dense2_in: usize,
    total: usize,
}

fn span(cursor: &mut usize, len: usize) -> Range<usize> {
    let start = *cursor;
    *cursor += len;
    start..start + len
}

fn layout(cfg: &CnnConfig) -> Result<Layout, ModelError> {
    let dims = cfg.dims()?;
    let dense1 = cfg.dense1_units.unwrap_or(0);
    let dense2_in = if dense1 > 0 { dense1 } else { dims.flat_dim };
    let mut cursor = 0;
    let conv1_w = span(&mut cursor, cfg.conv1_filters * KERNEL * KERNEL);
    let conv1_b = span(&mut cursor, cfg.conv1_filters);
    let conv2_w = span(&mut cursor, cfg.conv2_filters * cfg.conv1_filters * KERNEL * KERNEL);
    let conv2_b = span(&mut cursor, cfg.conv2_filters);
    let dense1_w = span(&mut cursor, dense1 * dims.flat_dim);
    let dense1_b = span(&mut cursor, dense1);
    let dense2_w = span(&mut cursor, cfg.dense2_units * dense2_in);
    let dense2_b = span(&mut cursor, cfg.dense2_units);
    let out_w = span(&mut cursor, cfg.n_classes * cfg.dense2_units);
    let out_b = span(&mut cursor, cfg.n_classes);
    Ok(Layout {
        dims,
        conv1_w,
        conv1_b,
        conv2_w,
        conv2_b,
        dense1_w,
        dense1_b,
        dense2_w,
        dense2_b,
        out_w,
        out_b,
        dense2_in,
        total: cursor,
    })
}

/// Total flat parameter count implied by `cfg`, without allocating.
pub(crate) fn param_count(cfg: &CnnConfig) -> Result<usize, ModelError> {
    Ok(layout(cfg)?.total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    /// Flat parameters in the documented block order.
    pub params: Vec<f64>,
}

impl CnnModel {
    /// He-initialized weights (Normal with variance 2/fan_in), zero
    /// biases, sampled in block order from a seeded generator.
    pub fn init(config: CnnConfig, seed: u64) -> Result<Self, ModelError> {
        let l = layout(&config)?;
        let mut params = vec![0.0; l.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight_blocks = [
            (l.conv1_w.clone(), KERNEL * KERNEL),
            (l.conv2_w.clone(), config.conv1_filters * KERNEL * KERNEL),
            (l.dense1_w.clone(), l.dims.flat_dim),
            (l.dense2_w.clone(), l.dense2_in),
            (l.out_w.clone(), config.dense2_units),
        ];
        for (range, fan_in) in weight_blocks {
            if range.is_empty() {
                continue;
            }
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            for i in range {
                params[i] = rng.sample(normal);
            }
        }
        Ok(Self { config, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise 1/(1-rate).
pub fn dropout_mask(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep_scale = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
        .collect()
}

/// Activations saved by a train-mode forward pass; everything backward
/// needs to reproduce the exact gradient of the loss that pass saw.
pub struct ForwardCache {
    input: Tensor3,
    conv1_act: Tensor3,
    conv2_act: Tensor3,
    pool_argmax: Vec<usize>,
    flat: Vec<f64>,
    dense1_act: Vec<f64>,
    mask: Vec<f64>,
    dropped: Vec<f64>,
    dense2_act: Vec<f64>,
    pub probs: Vec<f64>,
}

fn dense_forward(weights: &[f64], biases: &[f64], input: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    biases
        .iter()
        .enumerate()
        .map(|(u, &b)| {
            let row = &weights[u * n_in..(u + 1) * n_in];
            let mut acc = b;
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            acc
        })
        .collect()
}

/// Writes the weight and bias gradients in place and returns the
/// gradient with respect to the layer input.
fn dense_backward(
    weights: &[f64],
    input: &[f64],
    dout: &[f64],
    d_weights: &mut [f64],
    d_biases: &mut [f64],
) -> Vec<f64> {
    let n_in = input.len();
    let mut d_input = vec![0.0; n_in];
    for (u, &g) in dout.iter().enumerate() {
        d_biases[u] = g;
        let row = &weights[u * n_in..(u + 1) * n_in];
        let d_row = &mut d_weights[u * n_in..(u + 1) * n_in];
        for i in 0..n_in {
            d_row[i] = g * input[i];
            d_input[i] += g * row[i];
        }
    }
    d_input
}

fn relu_vec(mut values: Vec<f64>) -> Vec<f64> {
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    values
}

fn relu_tensor(mut t: Tensor3) -> Tensor3 {
    for v in t.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    t
}

/// Zeroes upstream gradients wherever the activation was clipped;
/// exact zeros count as clipped, matching ReLU'(0) = 0.
fn relu_gate(dout: &[f64], act: &[f64]) -> Vec<f64> {
    dout.iter()
        .zip(act)
        .map(|(&g, &a)| if a > 0.0 { g } else { 0.0 })
        .collect()
}

fn relu_gate_tensor(mut dout: Tensor3, act: &Tensor3) -> Tensor3 {
    for (g, &a) in dout.as_mut_slice().iter_mut().zip(act.as_slice()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
    dout
}

fn run_forward(
    model: &CnnModel,
    grid: &Matrix,
    dropout_seed: Option<u64>,
) -> Result<ForwardCache, ModelError> {
    let cfg = &model.config;
    let l = layout(cfg)?;
    if grid.rows() != cfg.input_height || grid.cols() != cfg.input_width {
        return Err(ModelError::ShapeMismatch(format!(
            "input grid is {}x{}, network expects {}x{}",
            grid.rows(),
            grid.cols(),
            cfg.input_height,
            cfg.input_width
        )));
    }
    let p = &model.params;
    let input = Tensor3::from_data(1, cfg.input_height, cfg.input_width, grid.as_slice().to_vec())?;
    let conv1_act = relu_tensor(conv2d_forward(&input, &p[l.conv1_w.clone()], &p[l.conv1_b.clone()])?);
    let conv2_act = relu_tensor(conv2d_forward(&conv1_act, &p[l.conv2_w.clone()], &p[l.conv2_b.clone()])?);
    let (pooled, pool_argmax) = maxpool_forward(&conv2_act)?;
    // Flattening is exactly the tensor's storage order.
    let flat = pooled.as_slice().to_vec();

    let mut dense1_act = Vec::new();
    let mut mask = Vec::new();
    let mut dropped = Vec::new();
    if cfg.dense1_units.is_some() {
        dense1_act = relu_vec(dense_forward(&p[l.dense1_w.clone()], &p[l.dense1_b.clone()], &flat));
        mask = match dropout_seed {
            Some(seed) if cfg.dropout_rate > 0.0 => {
                dropout_mask(dense1_act.len(), cfg.dropout_rate, seed)
            }
            _ => vec![1.0; dense1_act.len()],
        };
        dropped = dense1_act.iter().zip(&mask).map(|(a, m)| a * m).collect();
    }
    let dense2_input: &[f64] = if cfg.dense1_units.is_some() { &dropped } else { &flat };
    let dense2_act = relu_vec(dense_forward(&p[l.dense2_w.clone()], &p[l.dense2_b.clone()], dense2_input));
    let logits = dense_forward(&p[l.out_w.clone()], &p[l.out_b.clone()], &dense2_act);
    let probs = softmax(&logits);
    Ok(ForwardCache {
        input,
        conv1_act,
        conv2_act,
        pool_argmax,
        flat,
        dense1_act,
        mask,
        dropped,
        dense2_act,
        probs,
    })
}

/// Inference-mode class probabilities; no dropout is applied.
pub fn forward(model: &CnnModel, grid: &Matrix) -> Result<Vec<f64>, ModelError> {
    Ok(run_forward(model, grid, None)?.probs)
}

/// Train-mode pass: applies the seeded dropout mask and keeps the
/// activations backward needs.
pub fn forward_cached(
    model: &CnnModel,
    grid: &Matrix,
    dropout_seed: u64,
) -> Result<ForwardCache, ModelError> {
    run_forward(model, grid, Some(dropout_seed))
}

pub fn predict(model: &CnnModel, grid: &Matrix) -> Result<usize, ModelError> {
    Ok(argmax(&forward(model, grid)?))
}

/// Exact cross-entropy gradient for one cached pass, as a flat vector in
/// the same block order as the parameters.
pub fn backward(model: &CnnModel, cache: &ForwardCache, label: usize) -> Vec<f64> {
    let cfg = &model.config;
    let l = layout(cfg).expect("a constructed model has a valid config");
    assert!(label < cfg.n_classes);
    let p = &model.params;
    let mut grads = vec![0.0; l.total];

    // Carve the gradient vector into per-block slices up front; the
    // blocks are consecutive and disjoint.
    let rest = grads.as_mut_slice();
    let (g_conv1_w, rest) = rest.split_at_mut(l.conv1_w.len());
    let (g_conv1_b, rest) = rest.split_at_mut(l.conv1_b.len());
    let (g_conv2_w, rest) = rest.split_at_mut(l.conv2_w.len());
    let (g_conv2_b, rest) = rest.split_at_mut(l.conv2_b.len());
    let (g_dense1_w, rest) = rest.split_at_mut(l.dense1_w.len());
    let (g_dense1_b, rest) = rest.split_at_mut(l.dense1_b.len());
    let (g_dense2_w, rest) = rest.split_at_mut(l.dense2_w.len());
    let (g_dense2_b, rest) = rest.split_at_mut(l.dense2_b.len());
    let (g_out_w, g_out_b) = rest.split_at_mut(l.out_w.len());

    let mut d_logits = cache.probs.clone();
    d_logits[label] -= 1.0;
    let d_act2 = dense_backward(&p[l.out_w.clone()], &cache.dense2_act, &d_logits, g_out_w, g_out_b);
    let d_pre2 = relu_gate(&d_act2, &cache.dense2_act);
    let d_flat = if cfg.dense1_units.is_some() {
        let d_dropped = dense_backward(&p[l.dense2_w.clone()], &cache.dropped, &d_pre2, g_dense2_w, g_dense2_b);
        let d_act1: Vec<f64> = d_dropped.iter().zip(&cache.mask).map(|(g, m)| g * m).collect();
        let d_pre1 = relu_gate(&d_act1, &cache.dense1_act);
        dense_backward(&p[l.dense1_w.clone()], &cache.flat, &d_pre1, g_dense1_w, g_dense1_b)
    } else {
        dense_backward(&p[l.dense2_w.clone()], &cache.flat, &d_pre2, g_dense2_w, g_dense2_b)
    };

    let (pc, ph, pw) = l.dims.pool;
    let d_pool = Tensor3::from_data(pc, ph, pw, d_flat).expect("flat length matches pool dims");
    let d_conv2_act = maxpool_backward(cache.conv2_act.dims(), &cache.pool_argmax, &d_pool);
    let d_conv2_pre = relu_gate_tensor(d_conv2_act, &cache.conv2_act);
    let (dk2, db2, d_conv1_act) = conv2d_backward(&cache.conv1_act, &p[l.conv2_w.clone()], &d_conv2_pre)
        .expect("cached shapes are consistent");
    g_conv2_w.copy_from_slice(&dk2);
    g_conv2_b.copy_from_slice(&db2);
    let d_conv1_pre = relu_gate_tensor(d_conv1_act, &cache.conv1_act);
    let (dk1, db1, _) = conv2d_backward(&cache.input, &p[l.conv1_w.clone()], &d_conv1_pre)
        .expect("cached shapes are consistent");
    g_conv1_w.copy_from_slice(&dk1);
    g_conv1_b.copy_from_slice(&db1);
    grads
}

fn check_train_inputs(
    model: &CnnModel,
    items: &[FeatureTensor],
    cfg: &TrainConfig,
) -> Result<(), ModelError> {
    if items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch size must be >= 1".to_string()));
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate < 0.0 {
        return Err(ModelError::InvalidConfig(format!(
            "learning rate {} must be finite and non-negative",
            cfg.learning_rate
        )));
    }
    for item in items {
        if item.grid.rows() != model.config.input_height
            || item.grid.cols() != model.config.input_width
        {
            return Err(ModelError::ShapeMismatch(format!(
                "{} is {}x{}, network expects {}x{}",
                item.source_id,
                item.grid.rows(),
                item.grid.cols(),
                model.config.input_height,
                model.config.input_width
            )));
        }
        if item.label_index >= model.config.n_classes {
            return Err(ModelError::DimensionMismatch(format!(
                "{} has label {}, network has {} classes",
                item.source_id, item.label_index, model.config.n_classes
            )));
        }
    }
    Ok(())
}

/// Mini-batch Adam. Each epoch shuffles with a seed derived from the
/// epoch index; each train-mode pass draws a fresh dropout seed from a
/// separate counter stream, so runs are bit-reproducible. Reported
/// train loss and accuracy are streamed over the epoch's batches as the
/// parameters move, not recomputed afterwards; validation metrics use
/// inference mode on the finished epoch.
pub fn train_with_validation(
    model: &mut CnnModel,
    train_set: &Dataset<FeatureTensor>,
    validation: Option<&Dataset<FeatureTensor>>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, ModelError> {
    check_train_inputs(model, &train_set.items, cfg)?;
    if let Some(val) = validation {
        check_train_inputs(model, &val.items, cfg)?;
    }
    let n = train_set.items.len();
    let mut adam = AdamState::new(model.params.len(), cfg.learning_rate);
    let shuffle_base = derive_seed(cfg.seed, 0);
    let mask_base = derive_seed(cfg.seed, 1);
    let mut mask_counter = 0u64;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut grads = vec![0.0; model.params.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(shuffle_base, epoch as u64));
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in indices.chunks(cfg.batch_size) {
            grads.fill(0.0);
            for &idx in batch {
                let item = &train_set.items[idx];
                let cache = forward_cached(model, &item.grid, derive_seed(mask_base, mask_counter))?;
                mask_counter += 1;
                loss_sum += loss(&cache.probs, item.label_index);
                if argmax(&cache.probs) == item.label_index {
                    correct += 1;
                }
                let item_grads = backward(model, &cache, item.label_index);
                for (total, g) in grads.iter_mut().zip(&item_grads) {
                    *total += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            adam.step(&mut model.params, &grads);
        }
        let (val_loss, val_accuracy) = match validation {
            Some(val) => {
                let mut v_loss = 0.0;
                let mut v_correct = 0usize;
                for item in &val.items {
                    let probs = forward(model, &item.grid)?;
                    v_loss += loss(&probs, item.label_index);
                    if argmax(&probs) == item.label_index {
                        v_correct += 1;
                    }
                }
                let len = val.items.len() as f64;
                (Some(v_loss / len), Some(v_correct as f64 / len))
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(history)
}

pub fn train(
    model: &mut CnnModel,
    train_set: &Dataset<FeatureTensor>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, ModelError> {
    train_with_validation(model, train_set, None, cfg)
}
