//! Random forest: bagged CART trees with Gini impurity, midpoint
//! thresholds, per-node feature subsampling, and majority voting.
//!
//! Depth counts edges: the root sits at depth 0 and a tree of max_depth
//! 25 has at most 25 split levels. Every tie (impurity, leaf vote,
//! forest vote) breaks toward the lowest index so results are
//! reproducible.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::features::{Dataset, FeatureVector};
use crate::matrix::Matrix;
use crate::{argmax, derive_seed, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Values `<= threshold` go left, `> threshold` go right.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { class_counts: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_split: usize,
    /// Candidate features per node; None means ceil(sqrt(d)).
    pub feature_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 35,
            max_depth: 25,
            min_split: 2,
            feature_subsample: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub config: ForestConfig,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Gini impurity `1 - sum((c/N)^2)`.
pub fn gini(class_counts: &[usize]) -> Result<f64, ModelError> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(ModelError::EmptyCounts);
    }
    Ok(gini_unchecked(class_counts, total))
}

fn gini_unchecked(class_counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    1.0 - class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// A candidate split and the weighted Gini impurity of its children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub weighted_impurity: f64,
}

/// Best (feature, threshold) over midpoints between consecutive distinct
/// sorted values, minimizing child-weighted Gini. Ties break to the
/// lowest feature index, then the lowest threshold. None when no split
/// strictly reduces the parent impurity.
pub fn best_split(
    points: &Matrix,
    labels: &[usize],
    rows: &[usize],
    candidate_features: &[usize],
    n_classes: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let mut parent_counts = vec![0usize; n_classes];
    for &r in rows {
        parent_counts[labels[r]] += 1;
    }
    let parent = gini_unchecked(&parent_counts, n);

    let mut features: Vec<usize> = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<SplitCandidate> = None;
    let mut ordered: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in &features {
        ordered.clear();
        ordered.extend(rows.iter().map(|&r| (points.get(r, f), labels[r])));
        ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left = vec![0usize; n_classes];
        let mut right = parent_counts.clone();
        for i in 1..n {
            let (prev_value, prev_label) = ordered[i - 1];
            left[prev_label] += 1;
            right[prev_label] -= 1;
            let value = ordered[i].0;
            if value == prev_value {
                continue;
            }
            let threshold = (prev_value + value) / 2.0;
            let n_left = i as f64;
            let n_right = (n - i) as f64;
            let weighted = (n_left * gini_unchecked(&left, i)
                + n_right * gini_unchecked(&right, n - i))
                / n as f64;
            let better = match best {
                None => weighted < parent,
                Some(b) => weighted < b.weighted_impurity,
            };
            if better {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold,
                    weighted_impurity: weighted,
                });
            }
        }
    }
    best
}

fn count_classes(labels: &[usize], rows: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &r in rows {
        counts[labels[r]] += 1;
    }
    counts
}

/// Grows one CART tree over the given row indices. Recursion stops at
/// max_depth, node purity, fewer than min_split rows, or when no split
/// reduces impurity. Each split draws the configured number of candidate
/// features without replacement from `rng`.
pub fn build_tree(
    points: &Matrix,
    labels: &[usize],
    rows: &[usize],
    n_classes: usize,
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    build_node(points, labels, rows, n_classes, 0, cfg, rng)
}

fn build_node(
    points: &Matrix,
    labels: &[usize],
    rows: &[usize],
    n_classes: usize,
    depth: usize,
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let counts = count_classes(labels, rows, n_classes);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= cfg.max_depth || rows.len() < cfg.min_split || pure {
        return TreeNode::Leaf { class_counts: counts };
    }
    let d = points.cols();
    let k = cfg
        .feature_subsample
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let candidates: Vec<usize> = rand::seq::index::sample(rng, d, k).into_vec();
    let Some(split) = best_split(points, labels, rows, &candidates, n_classes) else {
        return TreeNode::Leaf { class_counts: counts };
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| points.get(r, split.feature) <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(build_node(points, labels, &left_rows, n_classes, depth + 1, cfg, rng)),
        right: Box::new(build_node(points, labels, &right_rows, n_classes, depth + 1, cfg, rng)),
    }
}

/// `n` draws with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Trains the forest: each tree gets a bootstrap sample and its own rng
/// stream derived from the master seed and tree index, so trees build in
/// parallel yet reproducibly.
pub fn fit(train: &Dataset<FeatureVector>, cfg: &ForestConfig) -> Result<ForestModel, ModelError> {
    if train.items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.n_estimators == 0 {
        return Err(ModelError::InvalidConfig(
            "n_estimators must be >= 1".to_string(),
        ));
    }
    let (points, labels) = train.to_matrix();
    let n_classes = train.class_names.len().max(labels.iter().max().unwrap() + 1);
    let rows: Vec<usize> = (0..points.rows()).collect();
    let trees: Vec<TreeNode> = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
            let bag = bootstrap_indices(rows.len(), &mut rng);
            build_node(&points, &labels, &bag, n_classes, 0, cfg, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        config: *cfg,
        n_features: points.cols(),
        n_classes,
    })
}

/// One tree's vote: traverse to a leaf, return its majority class
/// (ties to the lowest class index).
pub fn tree_vote(tree: &TreeNode, x: &[f64]) -> usize {
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf { class_counts } => {
                let mut best = 0;
                for (c, &count) in class_counts.iter().enumerate().skip(1) {
                    if count > class_counts[best] {
                        best = c;
                    }
                }
                return best;
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                node = if x[*feature] <= *threshold { left } else { right };
            }
        }
    }
}

fn check_dim(model: &ForestModel, x: &[f64]) -> Result<(), ModelError> {
    if x.len() != model.n_features {
        return Err(ModelError::DimensionMismatch(format!(
            "input has {} dims, forest expects {}",
            x.len(),
            model.n_features
        )));
    }
    Ok(())
}

/// Vote fractions across the trees.
pub fn predict_proba(model: &ForestModel, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_dim(model, x)?;
    let mut votes = vec![0usize; model.n_classes];
    for tree in &model.trees {
        votes[tree_vote(tree, x)] += 1;
    }
    let n = model.trees.len() as f64;
    Ok(votes.into_iter().map(|v| v as f64 / n).collect())
}

/// Majority of tree votes; ties to the lowest class index.
pub fn predict(model: &ForestModel, x: &[f64]) -> Result<usize, ModelError> {
    Ok(argmax(&predict_proba(model, x)?))
}
