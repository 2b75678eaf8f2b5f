//! K-nearest-neighbours classifier: full linear scan over stored points,
//! majority vote, plus a k-sweep and stratified k-fold cross-validation.
//!
//! Squared distances drive neighbour selection (argmin-preserving); vote
//! tie-breaks compare true Euclidean sums.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::features::{Dataset, FeatureVector};
use crate::matrix::Matrix;
use crate::ModelError;

pub const DEFAULT_K: usize = 1;

/// Stored training data, verbatim. `points` rows pair with `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub k: usize,
}

/// Stores the dataset without any computation.
pub fn fit(train: &Dataset<FeatureVector>, k: usize) -> Result<KnnModel, ModelError> {
    if train.items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if k == 0 {
        return Err(ModelError::InvalidConfig("k must be >= 1".to_string()));
    }
    if k > train.items.len() {
        return Err(ModelError::KTooLarge {
            k,
            n: train.items.len(),
        });
    }
    let (points, labels) = train.to_matrix();
    Ok(KnnModel { points, labels, k })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Majority vote over the k nearest stored points. Distance ties break
/// by stored index; vote ties by smallest summed Euclidean distance,
/// then lowest class index.
pub fn predict(model: &KnnModel, x: &[f64]) -> Result<usize, ModelError> {
    if x.len() != model.points.cols() {
        return Err(ModelError::DimensionMismatch(format!(
            "query has {} dims, stored points have {}",
            x.len(),
            model.points.cols()
        )));
    }
    let mut order: Vec<(f64, usize)> = model
        .points
        .iter_rows()
        .enumerate()
        .map(|(i, row)| (squared_distance(x, row), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let n_classes = model.labels.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; n_classes];
    let mut summed = vec![0.0f64; n_classes];
    for &(d2, i) in order.iter().take(model.k) {
        let class = model.labels[i];
        votes[class] += 1;
        summed[class] += d2.sqrt();
    }
    let top = *votes.iter().max().unwrap();
    let mut best: Option<usize> = None;
    for c in 0..n_classes {
        if votes[c] != top {
            continue;
        }
        match best {
            None => best = Some(c),
            Some(b) if summed[c] < summed[b] => best = Some(c),
            _ => {}
        }
    }
    Ok(best.unwrap())
}

/// Fraction of the k nearest neighbors voting for each of `n_classes`
/// classes. Uses the same neighbor ordering as `predict`, so the
/// predicted class always sits in the top vote band.
pub fn vote_fractions(
    model: &KnnModel,
    x: &[f64],
    n_classes: usize,
) -> Result<Vec<f64>, ModelError> {
    if x.len() != model.points.cols() {
        return Err(ModelError::DimensionMismatch(format!(
            "query has {} dims, stored points have {}",
            x.len(),
            model.points.cols()
        )));
    }
    if model.labels.iter().any(|&l| l >= n_classes) {
        return Err(ModelError::DimensionMismatch(format!(
            "stored labels exceed {n_classes} classes"
        )));
    }
    let mut order: Vec<(f64, usize)> = model
        .points
        .iter_rows()
        .enumerate()
        .map(|(i, row)| (squared_distance(x, row), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; n_classes];
    for &(_, i) in order.iter().take(model.k) {
        votes[model.labels[i]] += 1;
    }
    Ok(votes.iter().map(|&v| v as f64 / model.k as f64).collect())
}

/// Accuracy of `model` over a validation dataset.
fn evaluate(model: &KnnModel, val: &Dataset<FeatureVector>) -> Result<f64, ModelError> {
    let mut correct = 0usize;
    for item in &val.items {
        if predict(model, &item.values)? == item.label_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / val.items.len() as f64)
}

/// Evaluates each candidate k on a validation set. Duplicate candidates
/// collapse; pairs come back in ascending k. The returned best k is the
/// accuracy argmax, smallest k on ties.
pub fn sweep_k(
    train: &Dataset<FeatureVector>,
    val: &Dataset<FeatureVector>,
    k_values: &[usize],
) -> Result<(Vec<(usize, f64)>, usize), ModelError> {
    if val.items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut ks: Vec<usize> = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(ModelError::InvalidConfig("no k values given".to_string()));
    }
    let mut results = Vec::with_capacity(ks.len());
    for &k in &ks {
        let model = fit(train, k)?;
        results.push((k, evaluate(&model, val)?));
    }
    let mut best = results[0];
    for &(k, acc) in &results[1..] {
        if acc > best.1 {
            best = (k, acc);
        }
    }
    Ok((results, best.0))
}

/// Stratified fold assignment: per class, a seeded shuffle dealt
/// round-robin across folds, so per-class fold sizes differ by at most
/// one. Returns `n_folds` index lists.
pub fn stratified_folds(
    labels: &[usize],
    n_folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, ModelError> {
    if n_folds < 2 {
        return Err(ModelError::InvalidConfig(format!(
            "n_folds {n_folds} must be >= 2"
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < n_folds {
            return Err(ModelError::TooFewSamplesPerClass {
                class,
                count: members.len(),
                n_folds,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); n_folds];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for (i, &idx) in members.iter().enumerate() {
            folds[i % n_folds].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold cross-validation: each fold serves once as the
/// validation set. Returns the mean accuracy and the per-fold values.
pub fn kfold_cv(
    ds: &Dataset<FeatureVector>,
    k_model: usize,
    n_folds: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>), ModelError> {
    if ds.items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let folds = stratified_folds(&ds.labels(), n_folds, seed)?;
    let mut accuracies = Vec::with_capacity(n_folds);
    for held_out in 0..n_folds {
        let mut train_idx = Vec::new();
        for (f, fold) in folds.iter().enumerate() {
            if f != held_out {
                train_idx.extend_from_slice(fold);
            }
        }
        let model = fit(&ds.subset(&train_idx), k_model)?;
        accuracies.push(evaluate(&model, &ds.subset(&folds[held_out]))?);
    }
    let mean = accuracies.iter().sum::<f64>() / n_folds as f64;
    Ok((mean, accuracies))
}
