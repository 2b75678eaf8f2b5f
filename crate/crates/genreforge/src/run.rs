//! Command implementations behind the CLI. Each command works from a
//! resolved `RunConfig` plus its own arguments, writes artifacts
//! atomically under the output directory, and returns a summary for
//! the caller to print. Every output byte except the manifest
//! timestamp is determined by the configuration and master seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::audio;
use crate::cnn::{self, CnnConfig, CnnModel};
use crate::config::{ConfigError, ModelKind, RunConfig};
use crate::eval::{self, Comparison, EvalError, EvalReport, ModelChoice};
use crate::features::{
    self, Dataset, FeatureError, FeatureVector, LabeledItem, NormStats,
};
use crate::forest;
use crate::knn;
use crate::mlp;
use crate::persist::{self, FeatureCache, ModelFile, PersistError, SavedModel};
use crate::{argmax, EpochStats, Matrix, ModelError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
}

impl RunError {
    /// Process exit code: 1 usage, 2 data error, 3 training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Data(_) => 2,
            RunError::Training(_) => 3,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<FeatureError> for RunError {
    fn from(e: FeatureError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<PersistError> for RunError {
    fn from(e: PersistError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        RunError::Data(e.to_string())
    }
}

fn data_err(e: impl std::fmt::Display) -> RunError {
    RunError::Data(e.to_string())
}

fn train_err(e: impl std::fmt::Display) -> RunError {
    RunError::Training(e.to_string())
}

/// Vector features from the configured source: an explicit CSV wins
/// over an audio tree. The second element lists skipped inputs.
fn load_vectors(cfg: &RunConfig) -> Result<(Dataset<FeatureVector>, Vec<String>), RunError> {
    if let Some(csv) = &cfg.csv_path {
        let (ds, rejects) = features::ingest_csv(csv)?;
        Ok((ds, rejects.iter().map(|r| r.to_string()).collect()))
    } else if let Some(root) = &cfg.dataset_dir {
        let (ds, corrupt) = features::build_vector_dataset(root, &cfg.extraction)?;
        Ok((ds, corrupt_strings(&corrupt)))
    } else {
        Err(RunError::Usage(
            "no data source: pass --csv or --dataset-dir".to_string(),
        ))
    }
}

fn load_tensors(
    cfg: &RunConfig,
) -> Result<(Dataset<features::FeatureTensor>, Vec<String>), RunError> {
    let Some(root) = &cfg.dataset_dir else {
        return Err(RunError::Data(
            "feature type mismatch: cnn needs tensor features extracted from audio; \
             pass --dataset-dir"
                .to_string(),
        ));
    };
    let (ds, corrupt) = features::build_tensor_dataset(root, &cfg.extraction)?;
    Ok((ds, corrupt_strings(&corrupt)))
}

fn corrupt_strings(reports: &[audio::CorruptFileReport]) -> Vec<String> {
    reports
        .iter()
        .map(|c| format!("{}: {}", c.path, c.reason))
        .collect()
}

fn genre_counts<T: LabeledItem>(ds: &Dataset<T>) -> Vec<(String, usize)> {
    let mut counts = vec![0usize; ds.class_names.len()];
    for item in &ds.items {
        counts[item.label_index()] += 1;
    }
    ds.class_names.iter().cloned().zip(counts).collect()
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    persist::write_atomic(path, bytes).map_err(data_err)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), RunError> {
    fs::create_dir_all(&cfg.out_dir).map_err(data_err)
}

pub struct ExtractSummary {
    pub cache_path: PathBuf,
    pub manifest_path: PathBuf,
    pub per_genre_counts: Vec<(String, usize)>,
    pub corrupt_files: Vec<String>,
    pub n_clips: usize,
}

/// Decodes every clip under the dataset root, extracts both feature
/// forms, and writes the cache plus a manifest. The manifest's
/// `created_at_unix` line is the only timestamp any command emits.
pub fn cmd_extract(cfg: &RunConfig) -> Result<ExtractSummary, RunError> {
    cfg.validate()?;
    let Some(root) = cfg.dataset_dir.clone() else {
        return Err(RunError::Usage("extract needs --dataset-dir".to_string()));
    };
    let (vectors, corrupt) = features::build_vector_dataset(&root, &cfg.extraction)?;
    let (tensors, _) = features::build_tensor_dataset(&root, &cfg.extraction)?;
    if vectors.items.is_empty() {
        return Err(RunError::Data(format!(
            "no decodable clips under {}",
            root.display()
        )));
    }
    let corrupt_files = corrupt_strings(&corrupt);
    let per_genre_counts = genre_counts(&vectors);
    let n_clips = vectors.items.len();
    let cache = FeatureCache {
        config: cfg.extraction,
        class_names: vectors.class_names.clone(),
        vectors: Some(vectors.items),
        tensors: Some(tensors.items),
        corrupt_files: corrupt_files.clone(),
    };
    ensure_out_dir(cfg)?;
    let cache_path = cfg.out_dir.join("features.gfc");
    persist::save_cache(&cache, &cache_path)?;
    let manifest = render_manifest(cfg, &root, &per_genre_counts, &corrupt_files, n_clips);
    let manifest_path = cfg.out_dir.join("extract_manifest.txt");
    write_artifact(&manifest_path, manifest.as_bytes())?;
    Ok(ExtractSummary {
        cache_path,
        manifest_path,
        per_genre_counts,
        corrupt_files,
        n_clips,
    })
}

fn render_manifest(
    cfg: &RunConfig,
    root: &Path,
    counts: &[(String, usize)],
    corrupt: &[String],
    n_clips: usize,
) -> String {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut out = String::new();
    writeln!(out, "created_at_unix={created}").unwrap();
    writeln!(out, "dataset_dir={}", root.display()).unwrap();
    writeln!(out, "n_fft={}", cfg.extraction.stft.n_fft).unwrap();
    writeln!(out, "hop={}", cfg.extraction.stft.hop).unwrap();
    writeln!(out, "window=hann").unwrap();
    writeln!(out, "n_mels={}", cfg.extraction.n_mels).unwrap();
    writeln!(out, "n_mfcc={}", cfg.extraction.n_mfcc).unwrap();
    writeln!(out, "max_frames={}", cfg.extraction.max_frames).unwrap();
    writeln!(out, "clips={n_clips}").unwrap();
    writeln!(out, "corrupt={}", corrupt.len()).unwrap();
    out.push_str("genre_counts:\n");
    for (genre, count) in counts {
        writeln!(out, "  {genre}={count}").unwrap();
    }
    if !corrupt.is_empty() {
        out.push_str("corrupt_files:\n");
        for line in corrupt {
            writeln!(out, "  {line}").unwrap();
        }
    }
    out
}

pub struct TrainSummary {
    pub model_name: &'static str,
    pub model_path: PathBuf,
    pub history_path: PathBuf,
    pub report_path: PathBuf,
    pub confusion_path: PathBuf,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Trains one model on the configured features, evaluates it on the
/// held-out split, and persists the model (with normalization stats),
/// training history, confusion matrix, and a report.
pub fn cmd_train(
    cfg: &RunConfig,
    kind: ModelKind,
    features_path: Option<&Path>,
) -> Result<TrainSummary, RunError> {
    cfg.validate()?;
    if features_path.is_none() && !cfg.has_data_source() {
        return Err(RunError::Usage(
            "train needs --features, --csv, or --dataset-dir".to_string(),
        ));
    }
    match kind {
        ModelKind::Cnn => train_cnn(cfg, features_path),
        _ => train_vector_model(cfg, kind, features_path),
    }
}

fn load_vectors_for_train(
    cfg: &RunConfig,
    features_path: Option<&Path>,
) -> Result<(Dataset<FeatureVector>, Vec<String>), RunError> {
    match features_path {
        Some(path) => {
            let cache = persist::load_cache(path)?;
            let corrupt = cache.corrupt_files.clone();
            let ds = cache
                .vector_dataset()
                .ok_or_else(|| RunError::Data("feature cache holds no vectors".to_string()))?;
            Ok((ds, corrupt))
        }
        None => load_vectors(cfg),
    }
}

fn load_tensors_for_train(
    cfg: &RunConfig,
    features_path: Option<&Path>,
) -> Result<(Dataset<features::FeatureTensor>, Vec<String>), RunError> {
    match features_path {
        Some(path) => {
            let cache = persist::load_cache(path)?;
            let corrupt = cache.corrupt_files.clone();
            let ds = cache.tensor_dataset().ok_or_else(|| {
                RunError::Data(
                    "feature type mismatch: cnn needs tensor features, cache holds only vectors"
                        .to_string(),
                )
            })?;
            Ok((ds, corrupt))
        }
        None => load_tensors(cfg),
    }
}

fn train_vector_model(
    cfg: &RunConfig,
    kind: ModelKind,
    features_path: Option<&Path>,
) -> Result<TrainSummary, RunError> {
    let (ds, corrupt) = load_vectors_for_train(cfg, features_path)?;
    let (train_raw, test_raw) = eval::stratified_split(&ds, &cfg.split_spec())?;
    let stats = features::fit_normalization(&train_raw)?;
    let train = features::apply_normalization(&train_raw, &stats)?;
    let test = features::apply_normalization(&test_raw, &stats)?;
    let n_classes = ds.class_names.len();
    let (model, history) = match kind {
        ModelKind::Mlp => {
            let tc = cfg.mlp_train();
            let in_dim = train.items[0].values.len();
            let mut m = mlp::init(in_dim, n_classes, cfg.mlp_hidden, tc.seed);
            let history = mlp::train(&mut m, &train, &tc).map_err(train_err)?;
            (SavedModel::Mlp(m), history)
        }
        ModelKind::Knn => {
            let m = knn::fit(&train, cfg.knn_k).map_err(train_err)?;
            (SavedModel::Knn(m), Vec::new())
        }
        ModelKind::Forest => {
            let m = forest::fit(&train, &cfg.forest_config()).map_err(train_err)?;
            (SavedModel::Forest(m), Vec::new())
        }
        ModelKind::Cnn => unreachable!("cnn trains on tensors"),
    };
    let preds: Vec<usize> = test
        .items
        .iter()
        .map(|i| predict_vector(&model, &i.values))
        .collect::<Result<_, _>>()
        .map_err(train_err)?;
    finish_training(
        cfg,
        kind,
        model,
        &history,
        &preds,
        &test.labels(),
        &ds.class_names,
        stats,
        &corrupt,
        train.len(),
    )
}

fn train_cnn(cfg: &RunConfig, features_path: Option<&Path>) -> Result<TrainSummary, RunError> {
    let (ds, corrupt) = load_tensors_for_train(cfg, features_path)?;
    let (train_raw, test_raw) = eval::stratified_split(&ds, &cfg.split_spec())?;
    let stats = features::fit_tensor_normalization(&train_raw)?;
    let train = features::apply_tensor_normalization(&train_raw, &stats)?;
    let test = features::apply_tensor_normalization(&test_raw, &stats)?;
    let n_classes = ds.class_names.len();
    let tc = cfg.cnn_train();
    // Shape the network from the data itself so a cache extracted under
    // different pipeline parameters still trains.
    let (h, w) = (train.items[0].grid.rows(), train.items[0].grid.cols());
    let mut model = CnnModel::init(CnnConfig::new(h, w, n_classes), tc.seed).map_err(train_err)?;
    let history =
        cnn::train_with_validation(&mut model, &train, Some(&test), &tc).map_err(train_err)?;
    let preds: Vec<usize> = test
        .items
        .iter()
        .map(|i| cnn::predict(&model, &i.grid))
        .collect::<Result<_, _>>()
        .map_err(train_err)?;
    finish_training(
        cfg,
        ModelKind::Cnn,
        SavedModel::Cnn(model),
        &history,
        &preds,
        &test.labels(),
        &ds.class_names,
        stats,
        &corrupt,
        train.len(),
    )
}

fn predict_vector(model: &SavedModel, x: &[f64]) -> Result<usize, ModelError> {
    match model {
        SavedModel::Mlp(m) => mlp::predict(m, x),
        SavedModel::Knn(m) => knn::predict(m, x),
        SavedModel::Forest(m) => forest::predict(m, x),
        SavedModel::Cnn(_) => Err(ModelError::DimensionMismatch(
            "cnn takes tensor input".to_string(),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_training(
    cfg: &RunConfig,
    kind: ModelKind,
    model: SavedModel,
    history: &[EpochStats],
    preds: &[usize],
    labels: &[usize],
    class_names: &[String],
    stats: NormStats,
    corrupt: &[String],
    n_train: usize,
) -> Result<TrainSummary, RunError> {
    let accuracy = eval::accuracy(preds, labels)?;
    let cm = eval::confusion(preds, labels, class_names)?;
    let report = EvalReport {
        model_name: kind.name().to_string(),
        accuracy,
        per_class_recall: cm.per_class_recall(),
        config_summary: cfg
            .model_choice(kind, class_names.len())
            .config_summary(),
        corrupt_files: corrupt.to_vec(),
        confusion: cm,
    };
    let file = ModelFile {
        model,
        class_names: class_names.to_vec(),
        normalization: Some(stats),
    };
    ensure_out_dir(cfg)?;
    let name = kind.name();
    let model_path = cfg.out_dir.join(format!("{name}.gfm"));
    persist::save_model(&file, &model_path)?;
    let history_path = cfg.out_dir.join(format!("{name}_history.csv"));
    write_artifact(&history_path, history_csv(history).as_bytes())?;
    let confusion_path = cfg.out_dir.join(format!("{name}_confusion.csv"));
    write_artifact(
        &confusion_path,
        eval::confusion_csv(&report.confusion).as_bytes(),
    )?;
    let report_path = cfg.out_dir.join(format!("{name}_report.txt"));
    write_artifact(&report_path, render_report(&report).as_bytes())?;
    Ok(TrainSummary {
        model_name: name,
        model_path,
        history_path,
        report_path,
        confusion_path,
        test_accuracy: accuracy,
        n_train,
        n_test: labels.len(),
    })
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for h in history {
        writeln!(
            out,
            "{},{},{},{},{}",
            h.epoch,
            h.train_loss,
            h.train_accuracy,
            opt(h.val_loss),
            opt(h.val_accuracy)
        )
        .unwrap();
    }
    out
}

fn render_report(r: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "model={}", r.model_name).unwrap();
    writeln!(out, "config={}", r.config_summary).unwrap();
    writeln!(out, "test_items={}", r.confusion.total()).unwrap();
    writeln!(out, "test_accuracy={:.4}", r.accuracy).unwrap();
    out.push_str("per_class_recall:\n");
    for (name, recall) in r.confusion.class_names().iter().zip(&r.per_class_recall) {
        writeln!(out, "  {name}={recall:.4}").unwrap();
    }
    if !r.corrupt_files.is_empty() {
        out.push_str("skipped_inputs:\n");
        for line in &r.corrupt_files {
            writeln!(out, "  {line}").unwrap();
        }
    }
    out
}

pub struct PredictSummary {
    pub model_kind: &'static str,
    /// Descending probability; the model's own prediction is first.
    pub ranked: Vec<(String, f64)>,
}

/// Classifies one clip with a saved model, re-extracting features with
/// the pipeline parameters in effect and applying the stored
/// normalization. KNN and forests report vote fractions, MLP and CNN
/// softmax probabilities.
pub fn cmd_predict(
    cfg: &RunConfig,
    model_path: &Path,
    wav_path: &Path,
    top: Option<usize>,
) -> Result<PredictSummary, RunError> {
    cfg.validate()?;
    let file = persist::load_model(model_path)?;
    let clip = audio::load_wav(wav_path).map_err(data_err)?;
    let n_classes = file.class_names.len();
    let (probs, winner) = match &file.model {
        SavedModel::Cnn(m) => {
            let (h, w) = (m.config.input_height, m.config.input_width);
            if cfg.extraction.n_mfcc != w {
                return Err(RunError::Data(format!(
                    "model expects {w} mfcc coefficients, pipeline extracts {}",
                    cfg.extraction.n_mfcc
                )));
            }
            let t = features::extract_tensor(
                &clip,
                &cfg.extraction.stft,
                cfg.extraction.n_mels,
                w,
                h,
            )?;
            let grid = match &file.normalization {
                Some(stats) => normalize_grid(&t.grid, stats)?,
                None => t.grid,
            };
            let probs = cnn::forward(m, &grid).map_err(data_err)?;
            let winner = argmax(&probs);
            (probs, winner)
        }
        vector_model => {
            let v = features::extract_vector(
                &clip,
                &cfg.extraction.stft,
                cfg.extraction.n_mels,
                cfg.extraction.n_mfcc,
            )?;
            let x = match &file.normalization {
                Some(stats) => normalize_vec(&v.values, stats)?,
                None => v.values,
            };
            match vector_model {
                SavedModel::Mlp(m) => {
                    let probs = mlp::forward(m, &x).map_err(data_err)?;
                    let winner = argmax(&probs);
                    (probs, winner)
                }
                SavedModel::Knn(m) => {
                    let probs = knn::vote_fractions(m, &x, n_classes).map_err(data_err)?;
                    let winner = knn::predict(m, &x).map_err(data_err)?;
                    (probs, winner)
                }
                SavedModel::Forest(m) => {
                    let probs = forest::predict_proba(m, &x).map_err(data_err)?;
                    if probs.len() != n_classes {
                        return Err(RunError::Data(format!(
                            "model votes over {} classes, vocabulary has {n_classes}",
                            probs.len()
                        )));
                    }
                    let winner = argmax(&probs);
                    (probs, winner)
                }
                SavedModel::Cnn(_) => unreachable!("handled above"),
            }
        }
    };
    let mut ranked: Vec<(usize, f64)> = probs.iter().cloned().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    // The model's own tie-breaking may differ from plain argmax (KNN
    // falls back to summed distance); keep its choice on top.
    if let Some(pos) = ranked.iter().position(|&(c, _)| c == winner) {
        let w = ranked.remove(pos);
        ranked.insert(0, w);
    }
    let keep = top.unwrap_or(ranked.len()).min(ranked.len());
    Ok(PredictSummary {
        model_kind: file.model.kind(),
        ranked: ranked
            .into_iter()
            .take(keep)
            .map(|(c, p)| (file.class_names[c].clone(), p))
            .collect(),
    })
}

fn normalize_vec(values: &[f64], stats: &NormStats) -> Result<Vec<f64>, RunError> {
    if stats.mean.len() != values.len() {
        return Err(RunError::Data(format!(
            "normalization covers {} dims, clip produced {}",
            stats.mean.len(),
            values.len()
        )));
    }
    Ok(values
        .iter()
        .zip(&stats.mean)
        .zip(&stats.std)
        .map(|((v, m), s)| (v - m) / s)
        .collect())
}

fn normalize_grid(grid: &Matrix, stats: &NormStats) -> Result<Matrix, RunError> {
    if stats.mean.len() != grid.cols() {
        return Err(RunError::Data(format!(
            "normalization covers {} columns, grid has {}",
            stats.mean.len(),
            grid.cols()
        )));
    }
    let mut out = grid.clone();
    for row in out.iter_rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

pub struct CompareSummary {
    pub table: String,
    pub comparison: Comparison,
    pub artifact_paths: Vec<PathBuf>,
    /// (model, error) for every requested model that did not train.
    pub failed: Vec<(String, String)>,
}

/// Trains every requested model on one shared split and writes the
/// comparison table plus per-model reports, confusion CSVs, and PGM
/// heat maps. The caller exits nonzero when `failed` is not empty.
pub fn cmd_compare(cfg: &RunConfig, kinds: &[ModelKind]) -> Result<CompareSummary, RunError> {
    cfg.validate()?;
    if kinds.is_empty() {
        return Err(RunError::Usage("no models requested".to_string()));
    }
    if !cfg.has_data_source() {
        return Err(RunError::Usage(
            "compare needs --csv or --dataset-dir".to_string(),
        ));
    }
    let needs_vectors = kinds.iter().any(|k| *k != ModelKind::Cnn);
    let needs_tensors = kinds.contains(&ModelKind::Cnn);
    let mut corrupt = Vec::new();
    let vectors = if needs_vectors {
        let (ds, c) = load_vectors(cfg)?;
        corrupt = c;
        Some(ds)
    } else {
        None
    };
    let tensors = if needs_tensors && cfg.dataset_dir.is_some() {
        let (ds, c) = load_tensors(cfg)?;
        // Skip the duplicate list when the vectors came from the same
        // audio scan.
        if cfg.csv_path.is_some() || !needs_vectors {
            corrupt.extend(c);
        }
        Some(ds)
    } else {
        None
    };
    if vectors.is_none() && tensors.is_none() {
        return Err(RunError::Data(
            "feature type mismatch: cnn needs tensor features extracted from audio; \
             pass --dataset-dir"
                .to_string(),
        ));
    }
    let n_classes = vectors
        .as_ref()
        .map(|d| d.class_names.len())
        .or_else(|| tensors.as_ref().map(|d| d.class_names.len()))
        .unwrap();
    let choices: Vec<ModelChoice> = kinds
        .iter()
        .map(|k| cfg.model_choice(*k, n_classes))
        .collect();
    let comparison = eval::compare_models(
        vectors.as_ref(),
        tensors.as_ref(),
        &cfg.split_spec(),
        &choices,
        &corrupt,
    )?;
    ensure_out_dir(cfg)?;
    let table = eval::render_table(&comparison.rows);
    let mut artifact_paths = Vec::new();
    let save = |name: String, bytes: &[u8]| -> Result<PathBuf, RunError> {
        let path = cfg.out_dir.join(name);
        write_artifact(&path, bytes)?;
        Ok(path)
    };
    artifact_paths.push(save("comparison.txt".to_string(), table.as_bytes())?);
    artifact_paths.push(save(
        "comparison.csv".to_string(),
        eval::table_csv(&comparison.rows).as_bytes(),
    )?);
    for report in &comparison.reports {
        let name = &report.model_name;
        artifact_paths.push(save(
            format!("report_{name}.txt"),
            render_report(report).as_bytes(),
        )?);
        artifact_paths.push(save(
            format!("confusion_{name}.csv"),
            eval::confusion_csv(&report.confusion).as_bytes(),
        )?);
        artifact_paths.push(save(
            format!("confusion_{name}.pgm"),
            &eval::confusion_pgm(&report.confusion),
        )?);
    }
    let failed = comparison
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| (r.model_name.clone(), e.clone())))
        .collect();
    Ok(CompareSummary {
        table,
        comparison,
        artifact_paths,
        failed,
    })
}

pub struct SweepSummary {
    pub results: Vec<(usize, f64)>,
    pub best_k: usize,
    pub csv_path: PathBuf,
}

/// Evaluates KNN over candidate k values on the held-out split of
/// z-scored vector features.
pub fn cmd_sweep_k(cfg: &RunConfig, ks: &[usize]) -> Result<SweepSummary, RunError> {
    cfg.validate()?;
    if ks.is_empty() {
        return Err(RunError::Usage("no k values given".to_string()));
    }
    if ks.contains(&0) {
        return Err(RunError::Usage("k must be >= 1".to_string()));
    }
    let (ds, _) = load_vectors(cfg)?;
    let (train_raw, test_raw) = eval::stratified_split(&ds, &cfg.split_spec())?;
    let stats = features::fit_normalization(&train_raw)?;
    let train = features::apply_normalization(&train_raw, &stats)?;
    let test = features::apply_normalization(&test_raw, &stats)?;
    let (results, best_k) = knn::sweep_k(&train, &test, ks).map_err(train_err)?;
    ensure_out_dir(cfg)?;
    let mut csv = String::from("k,accuracy\n");
    for (k, acc) in &results {
        writeln!(csv, "{k},{acc}").unwrap();
    }
    let csv_path = cfg.out_dir.join("sweep_k.csv");
    write_artifact(&csv_path, csv.as_bytes())?;
    Ok(SweepSummary {
        results,
        best_k,
        csv_path,
    })
}
