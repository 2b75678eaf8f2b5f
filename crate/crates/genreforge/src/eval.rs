//! Splitting, metrics, confusion matrices, and the four-model
//! comparison runner.
//!
//! The comparison gives every enabled model the same train/test split
//! per feature source, z-scores features with statistics fit on the
//! training split only, flags models that fail instead of aborting the
//! rest, and reports rows sorted by accuracy with per-model reports
//! sorted by model name. All randomness derives from the split seed and
//! the per-model training seeds, so a full comparison is reproducible.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cnn::{self, CnnConfig, CnnModel};
use crate::features::{
    apply_normalization, apply_tensor_normalization, fit_normalization,
    fit_tensor_normalization, Dataset, FeatureTensor, FeatureVector, LabeledItem,
};
use crate::forest::{self, ForestConfig};
use crate::knn::{self, KnnModel};
use crate::mlp;
use crate::{derive_seed, TrainConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("{preds} predictions against {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("empty evaluation input")]
    Empty,
    #[error("label {label} is outside the {n_classes} known classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("no models enabled")]
    NoModels,
    #[error("feature preparation failed: {0}")]
    Feature(String),
}

/// How to cut a dataset into train and test portions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 42,
            stratified: true,
        }
    }
}

/// Splits into (train, test). Stratified mode shuffles each class with
/// its own derived seed and sends the first floor(fraction * n_c) items
/// to train; unstratified mode does one shuffle over everything. Both
/// portions keep the original dataset order.
pub fn stratified_split<T: LabeledItem + Clone>(
    ds: &Dataset<T>,
    spec: &SplitSpec,
) -> Result<(Dataset<T>, Dataset<T>), EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::InvalidSpec(format!(
            "train fraction {} must lie strictly between 0 and 1",
            spec.train_fraction
        )));
    }
    if ds.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels = ds.labels();
    let mut train_idx: Vec<usize> = Vec::new();
    let mut test_idx: Vec<usize> = Vec::new();
    if spec.stratified {
        for class in 0..ds.n_classes() {
            let mut members: Vec<usize> = (0..ds.len()).filter(|&i| labels[i] == class).collect();
            if members.len() < 2 {
                return Err(EvalError::TooFewSamples(format!(
                    "class {class} has {} samples, stratified splitting needs at least 2",
                    members.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, class as u64));
            members.shuffle(&mut rng);
            let n_train = (spec.train_fraction * members.len() as f64).floor() as usize;
            train_idx.extend(&members[..n_train]);
            test_idx.extend(&members[n_train..]);
        }
    } else {
        if ds.len() < 2 {
            return Err(EvalError::TooFewSamples(format!(
                "{} samples cannot be split",
                ds.len()
            )));
        }
        let mut members: Vec<usize> = (0..ds.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        members.shuffle(&mut rng);
        let n_train = (spec.train_fraction * members.len() as f64).floor() as usize;
        train_idx.extend(&members[..n_train]);
        test_idx.extend(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

/// Fraction of matching prediction/label pairs.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let matches = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(matches as f64 / preds.len() as f64)
}

/// Counts of (true class, predicted class) pairs; rows are the true
/// class, columns the prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<usize>,
    n_classes: usize,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn row_sum(&self, true_class: usize) -> usize {
        let row = &self.counts[true_class * self.n_classes..(true_class + 1) * self.n_classes];
        row.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|c| self.count(c, c)).sum()
    }

    /// Per-class recall: diagonal over row sum, 0 for classes absent
    /// from the test set.
    pub fn per_class_recall(&self) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                let row = self.row_sum(c);
                if row == 0 {
                    0.0
                } else {
                    self.count(c, c) as f64 / row as f64
                }
            })
            .collect()
    }
}

pub fn confusion(
    preds: &[usize],
    labels: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let n_classes = class_names.len();
    let mut counts = vec![0usize; n_classes * n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if l >= n_classes {
            return Err(EvalError::LabelOutOfRange { label: l, n_classes });
        }
        if p >= n_classes {
            return Err(EvalError::LabelOutOfRange { label: p, n_classes });
        }
        counts[l * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        n_classes,
        class_names: class_names.to_vec(),
    })
}

/// Everything measured for one trained model on the shared test split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub per_class_recall: Vec<f64>,
    pub config_summary: String,
    pub corrupt_files: Vec<String>,
}

/// One line of the comparison table; a failed model carries its error
/// text instead of an accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model_name: String,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Sorted by accuracy descending (name breaks ties); failures last.
    pub rows: Vec<ComparisonRow>,
    /// Sorted by model name.
    pub reports: Vec<EvalReport>,
    pub split_seed: u64,
    pub per_genre_counts: Vec<(String, usize)>,
}

/// A model entry for compare_models. Training seeds live inside each
/// entry, so a caller deriving them all from one master seed gets a
/// fully reproducible comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Mlp { hidden: usize, train: TrainConfig },
    Knn { k: usize },
    Cnn { config: CnnConfig, train: TrainConfig },
    Forest(ForestConfig),
}

impl ModelChoice {
    pub fn name(&self) -> &'static str {
        match self {
            ModelChoice::Mlp { .. } => "mlp",
            ModelChoice::Knn { .. } => "knn",
            ModelChoice::Cnn { .. } => "cnn",
            ModelChoice::Forest(_) => "random_forest",
        }
    }

    pub fn config_summary(&self) -> String {
        match self {
            ModelChoice::Mlp { hidden, train } => format!(
                "hidden={hidden} lr={} epochs={} batch={} seed={}",
                train.learning_rate, train.epochs, train.batch_size, train.seed
            ),
            ModelChoice::Knn { k } => format!("k={k}"),
            ModelChoice::Cnn { config, train } => format!(
                "filters={}/{} dense={:?}/{} dropout={} lr={} epochs={} batch={} seed={}",
                config.conv1_filters,
                config.conv2_filters,
                config.dense1_units,
                config.dense2_units,
                config.dropout_rate,
                train.learning_rate,
                train.epochs,
                train.batch_size,
                train.seed
            ),
            ModelChoice::Forest(cfg) => format!(
                "trees={} max_depth={} min_split={} features={} seed={}",
                cfg.n_estimators,
                cfg.max_depth,
                cfg.min_split,
                cfg.feature_subsample
                    .map_or("auto".to_string(), |k| k.to_string()),
                cfg.seed
            ),
        }
    }
}

fn prepare_vector_split(
    ds: &Dataset<FeatureVector>,
    spec: &SplitSpec,
) -> Result<(Dataset<FeatureVector>, Dataset<FeatureVector>), EvalError> {
    let (mut train, mut test) = stratified_split(ds, spec)?;
    let stats = fit_normalization(&train).map_err(|e| EvalError::Feature(e.to_string()))?;
    apply_normalization(&mut train, &stats).map_err(|e| EvalError::Feature(e.to_string()))?;
    apply_normalization(&mut test, &stats).map_err(|e| EvalError::Feature(e.to_string()))?;
    Ok((train, test))
}

fn prepare_tensor_split(
    ds: &Dataset<FeatureTensor>,
    spec: &SplitSpec,
) -> Result<(Dataset<FeatureTensor>, Dataset<FeatureTensor>), EvalError> {
    let (mut train, mut test) = stratified_split(ds, spec)?;
    let stats = fit_tensor_normalization(&train).map_err(|e| EvalError::Feature(e.to_string()))?;
    apply_tensor_normalization(&mut train, &stats).map_err(|e| EvalError::Feature(e.to_string()))?;
    apply_tensor_normalization(&mut test, &stats).map_err(|e| EvalError::Feature(e.to_string()))?;
    Ok((train, test))
}

type VectorSplit = (Dataset<FeatureVector>, Dataset<FeatureVector>);
type TensorSplit = (Dataset<FeatureTensor>, Dataset<FeatureTensor>);

fn vector_predictions(
    choice: &ModelChoice,
    split: Option<&VectorSplit>,
) -> Result<(Vec<usize>, Vec<usize>, Vec<String>), String> {
    let (train, test) = split.ok_or_else(|| {
        format!("{} needs vector features, none were provided", choice.name())
    })?;
    let preds: Vec<usize> = match choice {
        ModelChoice::Mlp { hidden, train: cfg } => {
            let dim = train.items.first().map_or(0, |i| i.values.len());
            let mut model = mlp::init(dim, train.n_classes(), *hidden, cfg.seed);
            mlp::train(&mut model, train, cfg).map_err(|e| e.to_string())?;
            test.items.iter().map(|i| mlp::predict(&model, &i.values)).collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?
        }
        ModelChoice::Knn { k } => {
            let model: KnnModel = knn::fit(train, *k).map_err(|e| e.to_string())?;
            test.items.iter().map(|i| knn::predict(&model, &i.values)).collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?
        }
        ModelChoice::Forest(cfg) => {
            let model = forest::fit(train, cfg).map_err(|e| e.to_string())?;
            test.items.iter().map(|i| forest::predict(&model, &i.values)).collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?
        }
        ModelChoice::Cnn { .. } => unreachable!("cnn uses tensor features"),
    };
    Ok((preds, test.labels(), test.class_names.clone()))
}

fn tensor_predictions(
    choice: &ModelChoice,
    split: Option<&TensorSplit>,
) -> Result<(Vec<usize>, Vec<usize>, Vec<String>), String> {
    let (train, test) = split.ok_or_else(|| {
        format!("{} needs tensor features, none were provided", choice.name())
    })?;
    let ModelChoice::Cnn { config, train: cfg } = choice else {
        unreachable!("only cnn uses tensor features");
    };
    let mut model = CnnModel::init(*config, cfg.seed).map_err(|e| e.to_string())?;
    cnn::train(&mut model, train, cfg).map_err(|e| e.to_string())?;
    let preds = test
        .items
        .iter()
        .map(|i| cnn::predict(&model, &i.grid))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok((preds, test.labels(), test.class_names.clone()))
}

/// Trains and evaluates every enabled model on one shared split per
/// feature source. A model that fails (or whose feature source is
/// missing) gets a flagged table row; the rest still run.
pub fn compare_models(
    vectors: Option<&Dataset<FeatureVector>>,
    tensors: Option<&Dataset<FeatureTensor>>,
    spec: &SplitSpec,
    choices: &[ModelChoice],
    corrupt_files: &[String],
) -> Result<Comparison, EvalError> {
    if choices.is_empty() {
        return Err(EvalError::NoModels);
    }
    if vectors.is_none() && tensors.is_none() {
        return Err(EvalError::Empty);
    }
    let needs_vectors = choices.iter().any(|c| !matches!(c, ModelChoice::Cnn { .. }));
    let needs_tensors = choices.iter().any(|c| matches!(c, ModelChoice::Cnn { .. }));
    let vector_split: Option<VectorSplit> = match (needs_vectors, vectors) {
        (true, Some(ds)) => Some(prepare_vector_split(ds, spec)?),
        _ => None,
    };
    let tensor_split: Option<TensorSplit> = match (needs_tensors, tensors) {
        (true, Some(ds)) => Some(prepare_tensor_split(ds, spec)?),
        _ => None,
    };

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for choice in choices {
        let outcome = match choice {
            ModelChoice::Cnn { .. } => tensor_predictions(choice, tensor_split.as_ref()),
            _ => vector_predictions(choice, vector_split.as_ref()),
        };
        match outcome.and_then(|(preds, labels, class_names)| {
            let acc = accuracy(&preds, &labels).map_err(|e| e.to_string())?;
            let cm = confusion(&preds, &labels, &class_names).map_err(|e| e.to_string())?;
            Ok((acc, cm))
        }) {
            Ok((acc, cm)) => {
                rows.push(ComparisonRow {
                    model_name: choice.name().to_string(),
                    accuracy: Some(acc),
                    error: None,
                });
                reports.push(EvalReport {
                    model_name: choice.name().to_string(),
                    accuracy: acc,
                    per_class_recall: cm.per_class_recall(),
                    confusion: cm,
                    config_summary: choice.config_summary(),
                    corrupt_files: corrupt_files.to_vec(),
                });
            }
            Err(message) => rows.push(ComparisonRow {
                model_name: choice.name().to_string(),
                accuracy: None,
                error: Some(message),
            }),
        }
    }
    rows.sort_by(|a, b| match (a.accuracy, b.accuracy) {
        (Some(x), Some(y)) => y
            .partial_cmp(&x)
            .unwrap()
            .then_with(|| a.model_name.cmp(&b.model_name)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.model_name.cmp(&b.model_name),
    });
    reports.sort_by(|a, b| a.model_name.cmp(&b.model_name));

    let counted = vectors.map(|ds| (ds.labels(), ds.class_names.clone())).or_else(|| {
        tensors.map(|ds| (ds.labels(), ds.class_names.clone()))
    });
    let per_genre_counts = match counted {
        Some((labels, names)) => names
            .iter()
            .enumerate()
            .map(|(c, name)| (name.clone(), labels.iter().filter(|&&l| l == c).count()))
            .collect(),
        None => Vec::new(),
    };
    Ok(Comparison {
        rows,
        reports,
        split_seed: spec.seed,
        per_genre_counts,
    })
}

/// Plain-text comparison table, widest name sets the column.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.model_name.len())
        .chain(std::iter::once("model".len()))
        .max()
        .unwrap();
    let mut out = format!("{:<width$}  accuracy\n", "model");
    for row in rows {
        match row.accuracy {
            Some(acc) => out.push_str(&format!("{:<width$}  {acc:.4}\n", row.model_name)),
            None => out.push_str(&format!(
                "{:<width$}  failed: {}\n",
                row.model_name,
                row.error.as_deref().unwrap_or("unknown error")
            )),
        }
    }
    out
}

/// Comparison table as CSV with columns model, accuracy, error.
pub fn table_csv(rows: &[ComparisonRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["model", "accuracy", "error"]).unwrap();
    for row in rows {
        let acc = row.accuracy.map_or(String::new(), |a| format!("{a}"));
        writer
            .write_record([
                row.model_name.as_str(),
                acc.as_str(),
                row.error.as_deref().unwrap_or(""),
            ])
            .unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

/// Confusion matrix as CSV: first column the true class, remaining
/// columns the predicted classes.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["class".to_string()];
    header.extend(cm.class_names().iter().cloned());
    writer.write_record(&header).unwrap();
    for t in 0..cm.n_classes() {
        let mut record = vec![cm.class_names()[t].clone()];
        for p in 0..cm.n_classes() {
            record.push(cm.count(t, p).to_string());
        }
        writer.write_record(&record).unwrap();
    }
    String::from_utf8(writer.into_inner().unwrap()).unwrap()
}

/// Confusion matrix as a binary PGM (P5) image, one pixel per cell,
/// row-major, 0 = black, brightest cell = largest count.
pub fn confusion_pgm(cm: &ConfusionMatrix) -> Vec<u8> {
    let n = cm.n_classes();
    let max = (0..n * n)
        .map(|i| cm.counts[i])
        .max()
        .unwrap_or(0);
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for &count in &cm.counts {
        let pixel = if max == 0 { 0 } else { (count * 255 / max) as u8 };
        out.push(pixel);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|c| format!("c{c}")).collect()
    }

    fn vector_dataset(points: Vec<(Vec<f64>, usize)>, n_classes: usize) -> Dataset<FeatureVector> {
        Dataset {
            items: points
                .into_iter()
                .enumerate()
                .map(|(i, (values, label_index))| FeatureVector {
                    values,
                    label_index,
                    source_id: format!("p{i}"),
                })
                .collect(),
            class_names: names(n_classes),
            normalization: None,
        }
    }

    fn blob_dataset(per_class: usize, n_classes: usize, seed: u64) -> Dataset<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        for class in 0..n_classes {
            let center = class as f64 * 10.0;
            for _ in 0..per_class {
                let v: Vec<f64> = (0..3)
                    .map(|_| center + rng.random_range(-1.0..1.0))
                    .collect();
                points.push((v, class));
            }
        }
        vector_dataset(points, n_classes)
    }

    #[test]
    fn split_is_80_20_per_class() {
        let ds = blob_dataset(100, 10, 1);
        let (train, test) = stratified_split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 200);
        for class in 0..10 {
            assert_eq!(train.labels().iter().filter(|&&l| l == class).count(), 80);
            assert_eq!(test.labels().iter().filter(|&&l| l == class).count(), 20);
        }
    }

    #[test]
    fn same_seed_means_same_split() {
        let ds = blob_dataset(10, 3, 2);
        let spec = SplitSpec::default();
        let (a_train, a_test) = stratified_split(&ds, &spec).unwrap();
        let (b_train, b_test) = stratified_split(&ds, &spec).unwrap();
        assert_eq!(a_train.items, b_train.items);
        assert_eq!(a_test.items, b_test.items);
        let other = SplitSpec { seed: 99, ..spec };
        let (c_train, _) = stratified_split(&ds, &other).unwrap();
        assert_ne!(a_train.items, c_train.items);
    }

    fn ids<T: LabeledItem>(ds: &Dataset<T>) -> Vec<String> {
        ds.items.iter().map(|i| i.source_id().to_string()).collect()
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..200u64 {
            let n_classes = rng.random_range(2..5);
            let per_class = rng.random_range(2..12);
            let ds = blob_dataset(per_class, n_classes, trial);
            let spec = SplitSpec {
                train_fraction: rng.random_range(0.05..0.95),
                seed: rng.random(),
                stratified: trial % 2 == 0,
            };
            let (train, test) = stratified_split(&ds, &spec).unwrap();
            assert_eq!(train.len() + test.len(), ds.len(), "trial {trial}");
            let mut all = ids(&train);
            all.extend(ids(&test));
            all.sort();
            let mut expected = ids(&ds);
            expected.sort();
            assert_eq!(all, expected, "trial {trial}");
            if spec.stratified {
                for class in 0..n_classes {
                    let want = (spec.train_fraction * per_class as f64).floor() as usize;
                    let got = train.labels().iter().filter(|&&l| l == class).count();
                    assert_eq!(got, want, "trial {trial} class {class}");
                }
            } else {
                let want = (spec.train_fraction * ds.len() as f64).floor() as usize;
                assert_eq!(train.len(), want, "trial {trial}");
            }
        }
    }

    #[test]
    fn bad_specs_and_thin_classes_are_rejected() {
        let ds = blob_dataset(5, 2, 3);
        for fraction in [0.0, 1.0, -0.2, 1.5] {
            let spec = SplitSpec { train_fraction: fraction, ..SplitSpec::default() };
            assert!(matches!(
                stratified_split(&ds, &spec),
                Err(EvalError::InvalidSpec(_))
            ));
        }
        let thin = vector_dataset(
            vec![(vec![0.0], 0), (vec![1.0], 0), (vec![2.0], 1)],
            2,
        );
        assert!(matches!(
            stratified_split(&thin, &SplitSpec::default()),
            Err(EvalError::TooFewSamples(_))
        ));
        let empty = vector_dataset(vec![], 2);
        assert!(matches!(
            stratified_split(&empty, &SplitSpec::default()),
            Err(EvalError::Empty)
        ));
    }

    #[test]
    fn accuracy_closed_forms() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[2, 3, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(EvalError::LengthMismatch { preds: 1, labels: 2 })
        ));
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn confusion_counts_pairs() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], &names(3)).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.count(t, p), usize::from(t == p));
            }
        }
        let single = confusion(&[5], &[2], &names(6)).unwrap();
        assert_eq!(single.count(2, 5), 1);
        assert_eq!(single.total(), 1);
        assert_eq!(single.trace(), 0);
    }

    #[test]
    fn trace_over_total_equals_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let n_classes = rng.random_range(2..6);
            let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
            let cm = confusion(&preds, &labels, &names(n_classes)).unwrap();
            assert_eq!(cm.total(), n);
            let acc = accuracy(&preds, &labels).unwrap();
            assert_eq!(cm.trace() as f64 / cm.total() as f64, acc);
            for class in 0..n_classes {
                let count = labels.iter().filter(|&&l| l == class).count();
                assert_eq!(cm.row_sum(class), count);
            }
        }
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        assert!(matches!(
            confusion(&[0], &[3], &names(3)),
            Err(EvalError::LabelOutOfRange { label: 3, n_classes: 3 })
        ));
        assert!(matches!(
            confusion(&[7], &[0], &names(3)),
            Err(EvalError::LabelOutOfRange { label: 7, n_classes: 3 })
        ));
    }

    #[test]
    fn recall_handles_empty_rows() {
        // Class 2 never appears as a true label.
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], &names(3)).unwrap();
        let recall = cm.per_class_recall();
        assert_eq!(recall[0], 1.0);
        assert_eq!(recall[1], 0.5);
        assert_eq!(recall[2], 0.0);
        assert_eq!(cm.row_sum(2), 0);
    }

    fn quick_choices() -> Vec<ModelChoice> {
        vec![
            ModelChoice::Forest(ForestConfig {
                n_estimators: 7,
                seed: 3,
                ..ForestConfig::default()
            }),
            ModelChoice::Knn { k: 1 },
        ]
    }

    #[test]
    fn single_model_comparison_has_one_row() {
        let ds = blob_dataset(10, 3, 7);
        let comparison = compare_models(
            Some(&ds),
            None,
            &SplitSpec::default(),
            &[ModelChoice::Knn { k: 1 }],
            &[],
        )
        .unwrap();
        assert_eq!(comparison.rows.len(), 1);
        assert_eq!(comparison.rows[0].model_name, "knn");
        assert_eq!(comparison.rows[0].accuracy, Some(1.0));
        assert_eq!(comparison.reports.len(), 1);
        assert_eq!(
            comparison.per_genre_counts,
            vec![("c0".to_string(), 10), ("c1".to_string(), 10), ("c2".to_string(), 10)]
        );
    }

    #[test]
    fn comparison_is_deterministic_and_shares_the_split() {
        let ds = blob_dataset(10, 3, 9);
        let spec = SplitSpec::default();
        let a = compare_models(Some(&ds), None, &spec, &quick_choices(), &[]).unwrap();
        let b = compare_models(Some(&ds), None, &spec, &quick_choices(), &[]).unwrap();
        assert_eq!(a, b);
        // Cleanly separated blobs: both models ace the same test split.
        for row in &a.rows {
            assert_eq!(row.accuracy, Some(1.0), "{}", row.model_name);
        }
        assert_eq!(a.reports[0].confusion.total(), a.reports[1].confusion.total());
        assert_eq!(a.split_seed, spec.seed);
    }

    #[test]
    fn missing_feature_source_flags_the_model_but_not_the_run() {
        let ds = blob_dataset(6, 2, 11);
        let mut choices = quick_choices();
        choices.push(ModelChoice::Cnn {
            config: CnnConfig::new(13, 130, 2),
            train: TrainConfig { learning_rate: 0.001, epochs: 1, batch_size: 4, seed: 1 },
        });
        let comparison =
            compare_models(Some(&ds), None, &SplitSpec::default(), &choices, &[]).unwrap();
        assert_eq!(comparison.rows.len(), 3);
        let cnn_row = comparison.rows.iter().find(|r| r.model_name == "cnn").unwrap();
        assert!(cnn_row.accuracy.is_none());
        assert!(cnn_row.error.as_deref().unwrap().contains("tensor features"));
        // Failures sort last; successes sort by accuracy then name.
        assert_eq!(comparison.rows[2].model_name, "cnn");
        assert_eq!(comparison.rows[0].model_name, "knn");
        assert_eq!(comparison.rows[1].model_name, "random_forest");
        // Reports exist only for models that ran, ordered by name.
        let report_names: Vec<&str> =
            comparison.reports.iter().map(|r| r.model_name.as_str()).collect();
        assert_eq!(report_names, vec!["knn", "random_forest"]);
    }

    #[test]
    fn no_models_or_no_sources_is_an_error() {
        let ds = blob_dataset(6, 2, 13);
        assert!(matches!(
            compare_models(Some(&ds), None, &SplitSpec::default(), &[], &[]),
            Err(EvalError::NoModels)
        ));
        assert!(matches!(
            compare_models(None, None, &SplitSpec::default(), &quick_choices(), &[]),
            Err(EvalError::Empty)
        ));
    }

    #[test]
    fn table_renderings_are_stable() {
        let rows = vec![
            ComparisonRow {
                model_name: "random_forest".to_string(),
                accuracy: Some(0.845),
                error: None,
            },
            ComparisonRow {
                model_name: "cnn".to_string(),
                accuracy: None,
                error: Some("no tensors".to_string()),
            },
        ];
        let text = render_table(&rows);
        assert_eq!(
            text,
            "model          accuracy\nrandom_forest  0.8450\ncnn            failed: no tensors\n"
        );
        let csv_text = table_csv(&rows);
        assert_eq!(
            csv_text,
            "model,accuracy,error\nrandom_forest,0.845,\ncnn,,no tensors\n"
        );
    }

    #[test]
    fn confusion_outputs_are_stable() {
        let cm = confusion(&[0, 1, 1, 0], &[0, 1, 0, 0], &names(2)).unwrap();
        assert_eq!(
            confusion_csv(&cm),
            "class,c0,c1\nc0,2,1\nc1,0,1\n"
        );
        let pgm = confusion_pgm(&cm);
        assert_eq!(&pgm[..11], b"P5\n2 2\n255\n".as_slice());
        // Pixels: counts 2,1,0,1 scaled by 255/2.
        assert_eq!(&pgm[11..], &[255, 127, 0, 127]);
    }

    #[test]
    fn corrupt_files_pass_through_to_reports() {
        let ds = blob_dataset(6, 2, 17);
        let corrupt = vec!["a.wav: bad header".to_string()];
        let comparison = compare_models(
            Some(&ds),
            None,
            &SplitSpec::default(),
            &[ModelChoice::Knn { k: 1 }],
            &corrupt,
        )
        .unwrap();
        assert_eq!(comparison.reports[0].corrupt_files, corrupt);
    }
}
