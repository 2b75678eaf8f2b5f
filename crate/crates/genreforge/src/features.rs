//! Labeled feature datasets from two sources: MFCC pipelines over audio
//! (summarized to 1D vectors, or kept 2D for the convolutional model) and
//! the 60-column per-track metadata CSV.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{self, AudioClip, AudioError, CorruptFileReport};
use crate::dsp::{mel_filterbank, mfcc, stft, DspError, StftConfig};
use crate::matrix::Matrix;

/// Summary feature vector for one track: per-coefficient mean then
/// per-coefficient variance, so `values.len() == 2 * n_mfcc` when
/// extracted from audio, or one CSV row's numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label_index: usize,
    pub source_id: String,
}

/// Fixed-shape MFCC grid for one track: `max_frames x n_mfcc`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub grid: Matrix,
    pub label_index: usize,
    pub source_id: String,
}

/// Items with a class label; lets dataset-level helpers stay generic.
pub trait LabeledItem {
    fn label_index(&self) -> usize;
    fn source_id(&self) -> &str;
}

impl LabeledItem for FeatureVector {
    fn label_index(&self) -> usize {
        self.label_index
    }
    fn source_id(&self) -> &str {
        &self.source_id
    }
}

impl LabeledItem for FeatureTensor {
    fn label_index(&self) -> usize {
        self.label_index
    }
    fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// Per-dimension z-score statistics, fit on training data only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A labeled dataset. `class_names` is the sorted genre vocabulary;
/// every `label_index` points into it. `normalization` is present only
/// after `apply_normalization`, carrying the train-fit stats used.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub items: Vec<T>,
    pub class_names: Vec<String>,
    pub normalization: Option<NormStats>,
}

impl<T: LabeledItem> Dataset<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label_index()).collect()
    }
}

impl<T: LabeledItem + Clone> Dataset<T> {
    /// New dataset holding the given items, in index order, with the
    /// same class vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            class_names: self.class_names.clone(),
            normalization: self.normalization.clone(),
        }
    }
}

impl Dataset<FeatureVector> {
    /// Stacks item values into a row-per-item matrix plus the label list.
    pub fn to_matrix(&self) -> (Matrix, Vec<usize>) {
        let dim = self.items.first().map_or(0, |i| i.values.len());
        let mut m = Matrix::zeros(self.items.len(), dim);
        for (r, item) in self.items.iter().enumerate() {
            m.row_mut(r).copy_from_slice(&item.values);
        }
        (m, self.labels())
    }
}

/// One skipped CSV data row and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowReject {
    /// `row` is the 1-based data row (header excluded).
    NonNumericCell { row: usize, column: String, value: String },
    RaggedRow { row: usize, expected: usize, actual: usize },
}

impl std::fmt::Display for RowReject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowReject::NonNumericCell { row, column, value } => {
                write!(f, "row {row}: column `{column}` has non-numeric value `{value}`")
            }
            RowReject::RaggedRow { row, expected, actual } => {
                write!(f, "row {row}: expected {expected} fields, found {actual}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("CSV has no `label` column")]
    MissingLabelColumn,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample rate mismatch: {path} is {actual} Hz, dataset is {expected} Hz")]
    RateMismatch { path: String, expected: u32, actual: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Audio-to-feature pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub max_frames: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            n_mels: 40,
            n_mfcc: 13,
            max_frames: 130,
        }
    }
}

fn mfcc_of(clip: &AudioClip, cfg: &StftConfig, n_mels: usize, n_mfcc: usize) -> Result<Matrix, FeatureError> {
    let spec = stft(clip, cfg)?;
    let nyquist = f64::from(clip.sample_rate_hz) / 2.0;
    let bank = mel_filterbank(n_mels, cfg.n_fft, clip.sample_rate_hz, 0.0, nyquist)?;
    Ok(mfcc(&spec, &bank, n_mfcc)?.coeffs)
}

/// Extracts a 1D summary vector: per-coefficient mean over frames,
/// then per-coefficient population variance, concatenated. The label is
/// assigned later, during dataset assembly.
pub fn extract_vector(
    clip: &AudioClip,
    cfg: &StftConfig,
    n_mels: usize,
    n_mfcc: usize,
) -> Result<FeatureVector, FeatureError> {
    let coeffs = mfcc_of(clip, cfg, n_mels, n_mfcc)?;
    let n = coeffs.rows() as f64;
    let mut values = vec![0.0; 2 * n_mfcc];
    for c in 0..n_mfcc {
        // Welford's update: identical frames yield a variance of exactly
        // zero, which two-pass summation does not guarantee.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for t in 0..coeffs.rows() {
            let x = coeffs.get(t, c);
            let d = x - mean;
            mean += d / (t + 1) as f64;
            m2 += d * (x - mean);
        }
        values[c] = mean;
        values[n_mfcc + c] = m2 / n;
    }
    Ok(FeatureVector {
        values,
        label_index: 0,
        source_id: clip.source_path.clone(),
    })
}

/// Extracts the full MFCC grid, padded or truncated to `max_frames` rows.
pub fn extract_tensor(
    clip: &AudioClip,
    cfg: &StftConfig,
    n_mels: usize,
    n_mfcc: usize,
    max_frames: usize,
) -> Result<FeatureTensor, FeatureError> {
    let coeffs = mfcc_of(clip, cfg, n_mels, n_mfcc)?;
    Ok(FeatureTensor {
        grid: coeffs.pad_or_truncate_rows(max_frames),
        label_index: 0,
        source_id: clip.source_path.clone(),
    })
}

fn scan_and_check_rate(
    root: &Path,
) -> Result<(Vec<(String, AudioClip)>, Vec<CorruptFileReport>, Vec<String>), FeatureError> {
    let (entries, corrupt) = audio::scan_dataset(root)?;
    let clips: Vec<Result<AudioClip, AudioError>> = entries
        .par_iter()
        .map(|(_, path)| audio::load_wav(path))
        .collect();
    let mut labeled = Vec::with_capacity(entries.len());
    for ((genre, _), clip) in entries.into_iter().zip(clips) {
        labeled.push((genre, clip?));
    }
    let expected = labeled[0].1.sample_rate_hz;
    for (_, clip) in &labeled {
        if clip.sample_rate_hz != expected {
            return Err(FeatureError::RateMismatch {
                path: clip.source_path.clone(),
                expected,
                actual: clip.sample_rate_hz,
            });
        }
    }
    let mut class_names: Vec<String> = labeled.iter().map(|(g, _)| g.clone()).collect();
    class_names.sort();
    class_names.dedup();
    Ok((labeled, corrupt, class_names))
}

fn finish_items<T: LabeledItem>(
    results: Vec<(String, Result<T, FeatureError>)>,
    class_names: Vec<String>,
) -> Result<(Dataset<T>, Vec<CorruptFileReport>), FeatureError> {
    let mut items = Vec::with_capacity(results.len());
    let mut corrupt = Vec::new();
    for (path, r) in results {
        match r {
            Ok(item) => items.push(item),
            // A decodable clip can still be unusable, e.g. shorter than
            // one analysis frame. Skip it like a corrupt file.
            Err(FeatureError::Dsp(e)) => corrupt.push(CorruptFileReport {
                path,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if items.is_empty() {
        return Err(FeatureError::Audio(AudioError::EmptyDataset));
    }
    Ok((
        Dataset {
            items,
            class_names,
            normalization: None,
        },
        corrupt,
    ))
}

/// Builds a summary-vector dataset from a `<root>/<genre>/*.wav` tree.
/// Undecodable or too-short files are itemized and skipped; mixed sample
/// rates are fatal. Items are ordered by genre then file name.
pub fn build_vector_dataset(
    root: &Path,
    cfg: &ExtractionConfig,
) -> Result<(Dataset<FeatureVector>, Vec<CorruptFileReport>), FeatureError> {
    let (labeled, mut corrupt, class_names) = scan_and_check_rate(root)?;
    let results: Vec<(String, Result<FeatureVector, FeatureError>)> = labeled
        .par_iter()
        .map(|(genre, clip)| {
            let item = extract_vector(clip, &cfg.stft, cfg.n_mels, cfg.n_mfcc).map(|mut v| {
                v.label_index = class_names.binary_search(genre).unwrap();
                v
            });
            (clip.source_path.clone(), item)
        })
        .collect();
    let (ds, more) = finish_items(results, class_names)?;
    corrupt.extend(more);
    Ok((ds, corrupt))
}

/// Builds a 2D-tensor dataset from a `<root>/<genre>/*.wav` tree. Same
/// skipping and ordering rules as `build_vector_dataset`.
pub fn build_tensor_dataset(
    root: &Path,
    cfg: &ExtractionConfig,
) -> Result<(Dataset<FeatureTensor>, Vec<CorruptFileReport>), FeatureError> {
    let (labeled, mut corrupt, class_names) = scan_and_check_rate(root)?;
    let results: Vec<(String, Result<FeatureTensor, FeatureError>)> = labeled
        .par_iter()
        .map(|(genre, clip)| {
            let item = extract_tensor(clip, &cfg.stft, cfg.n_mels, cfg.n_mfcc, cfg.max_frames)
                .map(|mut t| {
                    t.label_index = class_names.binary_search(genre).unwrap();
                    t
                });
            (clip.source_path.clone(), item)
        })
        .collect();
    let (ds, more) = finish_items(results, class_names)?;
    corrupt.extend(more);
    Ok((ds, corrupt))
}

/// Ingests a per-track metadata CSV: header row, a `label` column, and
/// numeric feature columns. `filename` and `length` columns are dropped
/// (`filename` becomes the item's source id). Rows with ragged field
/// counts or non-numeric cells are itemized and skipped, never fatal.
pub fn ingest_csv(path: &Path) -> Result<(Dataset<FeatureVector>, Vec<RowReject>), FeatureError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_pos = headers
        .iter()
        .position(|h| h == "label")
        .ok_or(FeatureError::MissingLabelColumn)?;
    let filename_pos = headers.iter().position(|h| h == "filename");
    let feature_pos: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_pos && Some(i) != filename_pos && headers[i] != "length")
        .collect();

    let mut rejects = Vec::new();
    let mut pending: Vec<(Vec<f64>, String, String)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        if record.len() != headers.len() {
            rejects.push(RowReject::RaggedRow {
                row,
                expected: headers.len(),
                actual: record.len(),
            });
            continue;
        }
        let mut values = Vec::with_capacity(feature_pos.len());
        let mut bad_cell = None;
        for &pos in &feature_pos {
            match record[pos].parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => {
                    bad_cell = Some(RowReject::NonNumericCell {
                        row,
                        column: headers[pos].clone(),
                        value: record[pos].to_string(),
                    });
                    break;
                }
            }
        }
        if let Some(reject) = bad_cell {
            rejects.push(reject);
            continue;
        }
        let source = filename_pos
            .map(|p| record[p].to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("row{row}"));
        pending.push((values, record[label_pos].to_string(), source));
    }
    if pending.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }

    let mut class_names: Vec<String> = pending.iter().map(|(_, l, _)| l.clone()).collect();
    class_names.sort();
    class_names.dedup();
    let items = pending
        .into_iter()
        .map(|(values, label, source_id)| FeatureVector {
            values,
            label_index: class_names.binary_search(&label).unwrap(),
            source_id,
        })
        .collect();
    Ok((
        Dataset {
            items,
            class_names,
            normalization: None,
        },
        rejects,
    ))
}

/// Fits per-dimension z-score statistics over the items. Population
/// variance; exactly-constant dimensions get std 1 so they normalize
/// to zero.
pub fn fit_normalization(ds: &Dataset<FeatureVector>) -> Result<NormStats, FeatureError> {
    if ds.items.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let dim = ds.items[0].values.len();
    let n = ds.items.len() as f64;
    let mut mean = vec![0.0; dim];
    for item in &ds.items {
        for (m, v) in mean.iter_mut().zip(&item.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for item in &ds.items {
        for ((s, v), m) in var.iter_mut().zip(&item.values).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let v = (s / n).sqrt();
            if v == 0.0 {
                1.0
            } else {
                v
            }
        })
        .collect();
    Ok(NormStats { mean, std })
}

/// Applies train-fit statistics: `(x - mean) / std` per dimension.
/// Applying twice shifts again; callers normalize exactly once.
pub fn apply_normalization(
    ds: &Dataset<FeatureVector>,
    stats: &NormStats,
) -> Result<Dataset<FeatureVector>, FeatureError> {
    let dim = ds.items.first().map_or(stats.mean.len(), |i| i.values.len());
    if stats.mean.len() != dim || stats.std.len() != dim {
        return Err(FeatureError::DimensionMismatch(format!(
            "stats cover {} dims, items have {}",
            stats.mean.len(),
            dim
        )));
    }
    let items = ds
        .items
        .iter()
        .map(|item| {
            let values = item
                .values
                .iter()
                .zip(&stats.mean)
                .zip(&stats.std)
                .map(|((v, m), s)| (v - m) / s)
                .collect();
            FeatureVector {
                values,
                label_index: item.label_index,
                source_id: item.source_id.clone(),
            }
        })
        .collect();
    Ok(Dataset {
        items,
        class_names: ds.class_names.clone(),
        normalization: Some(stats.clone()),
    })
}

/// Fits per-coefficient (column) z-score statistics over every frame of
/// every grid, padding rows included.
pub fn fit_tensor_normalization(ds: &Dataset<FeatureTensor>) -> Result<NormStats, FeatureError> {
    if ds.items.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let dim = ds.items[0].grid.cols();
    let n = (ds.items.len() * ds.items[0].grid.rows()) as f64;
    let mut mean = vec![0.0; dim];
    for item in &ds.items {
        for row in item.grid.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for item in &ds.items {
        for row in item.grid.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let v = (s / n).sqrt();
            if v == 0.0 {
                1.0
            } else {
                v
            }
        })
        .collect();
    Ok(NormStats { mean, std })
}

/// Applies per-coefficient statistics to every frame of every grid.
pub fn apply_tensor_normalization(
    ds: &Dataset<FeatureTensor>,
    stats: &NormStats,
) -> Result<Dataset<FeatureTensor>, FeatureError> {
    let dim = ds.items.first().map_or(stats.mean.len(), |i| i.grid.cols());
    if stats.mean.len() != dim || stats.std.len() != dim {
        return Err(FeatureError::DimensionMismatch(format!(
            "stats cover {} dims, grids have {}",
            stats.mean.len(),
            dim
        )));
    }
    let items = ds
        .items
        .iter()
        .map(|item| {
            let mut grid = item.grid.clone();
            for row in grid.iter_rows_mut() {
                for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
                    *v = (*v - m) / s;
                }
            }
            FeatureTensor {
                grid,
                label_index: item.label_index,
                source_id: item.source_id.clone(),
            }
        })
        .collect();
    Ok(Dataset {
        items,
        class_names: ds.class_names.clone(),
        normalization: Some(stats.clone()),
    })
}
