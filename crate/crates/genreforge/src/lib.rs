//! Music genre classification toolkit.
//!
//! Decodes a GTZAN-style WAV dataset, extracts STFT/MFCC features, and
//! trains and compares four classifiers built from first principles: a
//! multilayer perceptron, k-nearest neighbours, a convolutional network
//! on 2D MFCC tensors, and a random forest. Everything is seeded and
//! deterministic: the same inputs and seed produce byte-identical models
//! and reports.

pub mod audio;
pub mod cnn;
pub mod config;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod forest;
pub mod knn;
pub mod mlp;
pub mod persist;
pub mod run;

mod matrix;

pub use matrix::Matrix;

use thiserror::Error;

/// Errors shared by the classifiers.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("k = {k} exceeds the {n} stored points")]
    KTooLarge { k: usize, n: usize },
    #[error("class index {class} has {count} samples, fewer than the {n_folds} folds")]
    TooFewSamplesPerClass { class: usize, count: usize, n_folds: usize },
    #[error("class counts are empty")]
    EmptyCounts,
    #[error("input too small: {0}")]
    InputTooSmall(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Gradient-descent hyperparameters shared by the MLP and the CNN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// One row of training history. Validation fields are filled only when
/// the trainer was given a validation split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Derives an independent stream seed from a master seed and an index
/// (per-tree seeds, per-model seeds, per-sample dropout seeds).
///
/// splitmix64 finalizer; small index changes decorrelate the output.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_spreads() {
        assert_eq!(derive_seed(42, 0), derive_seed(42, 0));
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
    }
}
