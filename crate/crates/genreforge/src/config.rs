//! Run configuration: built-in defaults, flat `key=value` config
//! files, and command-line overrides, applied in that order so flags
//! win over the file and the file wins over defaults.
//!
//! A single master seed determines every random stream. The split uses
//! it directly; each trainable model gets its own stream derived from
//! a fixed per-model salt, so runs are reproducible end to end from
//! one number.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cnn::CnnConfig;
use crate::eval::{ModelChoice, SplitSpec};
use crate::features::ExtractionConfig;
use crate::forest::ForestConfig;
use crate::{derive_seed, TrainConfig};

const MLP_SEED_SALT: u64 = 1;
const CNN_SEED_SALT: u64 = 2;
const FOREST_SEED_SALT: u64 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected key=value, found {text:?}")]
    BadLine { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything a command needs besides its own positional arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
    pub extraction: ExtractionConfig,
    pub mlp_hidden: usize,
    pub mlp_learning_rate: f64,
    pub mlp_epochs: usize,
    pub mlp_batch_size: usize,
    pub cnn_learning_rate: f64,
    pub cnn_epochs: usize,
    pub cnn_batch_size: usize,
    pub knn_k: usize,
    pub forest_trees: usize,
    pub forest_depth: usize,
    pub forest_min_split: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: None,
            csv_path: None,
            out_dir: PathBuf::from("out"),
            seed: 42,
            train_fraction: 0.8,
            stratified: true,
            extraction: ExtractionConfig::default(),
            mlp_hidden: 1024,
            mlp_learning_rate: 0.01,
            mlp_epochs: 50,
            mlp_batch_size: 32,
            cnn_learning_rate: 0.001,
            cnn_epochs: 10,
            cnn_batch_size: 32,
            knn_k: 1,
            forest_trees: 35,
            forest_depth: 25,
            forest_min_split: 2,
        }
    }
}

impl RunConfig {
    pub fn has_data_source(&self) -> bool {
        self.dataset_dir.is_some() || self.csv_path.is_some()
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratified: self.stratified,
        }
    }

    pub fn mlp_train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.mlp_learning_rate,
            epochs: self.mlp_epochs,
            batch_size: self.mlp_batch_size,
            seed: derive_seed(self.seed, MLP_SEED_SALT),
        }
    }

    pub fn cnn_train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.cnn_learning_rate,
            epochs: self.cnn_epochs,
            batch_size: self.cnn_batch_size,
            seed: derive_seed(self.seed, CNN_SEED_SALT),
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_estimators: self.forest_trees,
            max_depth: self.forest_depth,
            min_split: self.forest_min_split,
            feature_subsample: None,
            seed: derive_seed(self.seed, FOREST_SEED_SALT),
        }
    }

    /// Network shaped for this pipeline's tensors: extracted grids are
    /// `max_frames x n_mfcc`, and convolution is transpose-symmetric,
    /// so they are consumed in storage orientation.
    pub fn cnn_config(&self, n_classes: usize) -> CnnConfig {
        CnnConfig::new(self.extraction.max_frames, self.extraction.n_mfcc, n_classes)
    }

    pub fn model_choice(&self, kind: ModelKind, n_classes: usize) -> ModelChoice {
        match kind {
            ModelKind::Mlp => ModelChoice::Mlp {
                hidden: self.mlp_hidden,
                train: self.mlp_train(),
            },
            ModelKind::Knn => ModelChoice::Knn { k: self.knn_k },
            ModelKind::Cnn => ModelChoice::Cnn {
                config: self.cnn_config(n_classes),
                train: self.cnn_train(),
            },
            ModelKind::Forest => ModelChoice::Forest(self.forest_config()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("n_fft", self.extraction.stft.n_fft),
            ("hop", self.extraction.stft.hop),
            ("n_mels", self.extraction.n_mels),
            ("n_mfcc", self.extraction.n_mfcc),
            ("max_frames", self.extraction.max_frames),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_epochs", self.mlp_epochs),
            ("mlp_batch_size", self.mlp_batch_size),
            ("cnn_epochs", self.cnn_epochs),
            ("cnn_batch_size", self.cnn_batch_size),
            ("knn_k", self.knn_k),
            ("forest_trees", self.forest_trees),
            ("forest_depth", self.forest_depth),
            ("forest_min_split", self.forest_min_split),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if !self.extraction.stft.n_fft.is_power_of_two() {
            return Err(ConfigError::Invalid(
                "n_fft must be a power of two".to_string(),
            ));
        }
        if self.extraction.stft.hop > self.extraction.stft.n_fft {
            return Err(ConfigError::Invalid("hop must not exceed n_fft".to_string()));
        }
        for (name, value) in [
            ("mlp_learning_rate", self.mlp_learning_rate),
            ("cnn_learning_rate", self.cnn_learning_rate),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be a positive finite number"
                )));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(
                "train_fraction must lie strictly between 0 and 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Model selector as written on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mlp,
    Knn,
    Cnn,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Mlp,
        ModelKind::Knn,
        ModelKind::Cnn,
        ModelKind::Forest,
    ];

    /// Name used in reports and file names.
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Knn => "knn",
            ModelKind::Cnn => "cnn",
            ModelKind::Forest => "random_forest",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "knn" => Ok(ModelKind::Knn),
            "cnn" => Ok(ModelKind::Cnn),
            "forest" | "random_forest" => Ok(ModelKind::Forest),
            other => Err(ConfigError::BadValue {
                key: "models".to_string(),
                value: other.to_string(),
                reason: "expected mlp, knn, cnn, or forest".to_string(),
            }),
        }
    }
}

/// Parses a comma-separated model list, deduplicating while keeping
/// first-mention order.
pub fn parse_model_list(s: &str) -> Result<Vec<ModelKind>, ConfigError> {
    let mut kinds = Vec::new();
    for part in s.split(',') {
        let kind = ModelKind::parse(part.trim())?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok(kinds)
}

/// Parses flat `key=value` lines; `#` starts a comment, blank lines are
/// skipped, and values keep everything after the first `=`.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

pub fn load_config_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    parse_pairs(&std::fs::read_to_string(path)?)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".to_string(),
        }),
    }
}

pub fn apply_pair(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "dataset_dir" => cfg.dataset_dir = Some(PathBuf::from(value)),
        "csv" => cfg.csv_path = Some(PathBuf::from(value)),
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        "seed" => cfg.seed = parse_num(key, value)?,
        "train_fraction" => cfg.train_fraction = parse_num(key, value)?,
        "stratified" => cfg.stratified = parse_bool(key, value)?,
        "n_fft" => cfg.extraction.stft.n_fft = parse_num(key, value)?,
        "hop" => cfg.extraction.stft.hop = parse_num(key, value)?,
        "n_mels" => cfg.extraction.n_mels = parse_num(key, value)?,
        "n_mfcc" => cfg.extraction.n_mfcc = parse_num(key, value)?,
        "max_frames" => cfg.extraction.max_frames = parse_num(key, value)?,
        "mlp_hidden" => cfg.mlp_hidden = parse_num(key, value)?,
        "mlp_learning_rate" => cfg.mlp_learning_rate = parse_num(key, value)?,
        "mlp_epochs" => cfg.mlp_epochs = parse_num(key, value)?,
        "mlp_batch_size" => cfg.mlp_batch_size = parse_num(key, value)?,
        "cnn_learning_rate" => cfg.cnn_learning_rate = parse_num(key, value)?,
        "cnn_epochs" => cfg.cnn_epochs = parse_num(key, value)?,
        "cnn_batch_size" => cfg.cnn_batch_size = parse_num(key, value)?,
        "knn_k" => cfg.knn_k = parse_num(key, value)?,
        "forest_trees" => cfg.forest_trees = parse_num(key, value)?,
        "forest_depth" => cfg.forest_depth = parse_num(key, value)?,
        "forest_min_split" => cfg.forest_min_split = parse_num(key, value)?,
        other => return Err(ConfigError::UnknownKey(other.to_string())),
    }
    Ok(())
}

pub fn apply_pairs(cfg: &mut RunConfig, pairs: &[(String, String)]) -> Result<(), ConfigError> {
    for (key, value) in pairs {
        apply_pair(cfg, key, value)?;
    }
    Ok(())
}
