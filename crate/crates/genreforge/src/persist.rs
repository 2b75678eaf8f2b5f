//! Binary persistence: trained models ("GFM1") and feature caches
//! ("GFC1").
//!
//! Both containers share one set of conventions: little-endian
//! integers, 64-bit floats, length-prefixed UTF-8 strings, and an
//! explicit shape header (dimension count, then each extent) in front
//! of every numeric block. Encoding is deterministic, so
//! save -> load -> save reproduces a file byte for byte, and a loaded
//! model predicts bit-identically to the one saved.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cnn::{self, CnnConfig, CnnModel};
use crate::dsp::{StftConfig, Window};
use crate::features::{Dataset, ExtractionConfig, FeatureTensor, FeatureVector, NormStats};
use crate::forest::{ForestConfig, ForestModel, TreeNode};
use crate::knn::KnnModel;
use crate::mlp::MlpModel;
use crate::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"GFM1";
pub const CACHE_MAGIC: &[u8; 4] = b"GFC1";
pub const FORMAT_VERSION: u32 = 1;

/// Nesting limit while decoding trees; guards the stack against a
/// corrupt file that opens splits without ever closing them.
const MAX_TREE_DEPTH: usize = 10_000;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed file: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> PersistError {
    PersistError::Malformed(msg.into())
}

/// One trained classifier of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Mlp(MlpModel),
    Knn(KnnModel),
    Cnn(CnnModel),
    Forest(ForestModel),
}

impl SavedModel {
    /// Tag written to the file; matches the model names used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Mlp(_) => "mlp",
            SavedModel::Knn(_) => "knn",
            SavedModel::Cnn(_) => "cnn",
            SavedModel::Forest(_) => "random_forest",
        }
    }
}

/// Everything needed to classify new clips: the model, the genre
/// vocabulary its label indices point into, and the normalization
/// statistics its inputs were trained under (absent when the model was
/// trained on raw features).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: SavedModel,
    pub class_names: Vec<String>,
    pub normalization: Option<NormStats>,
}

/// Extracted features for a dataset, cached so later commands skip
/// decoding audio. Items are stored raw; normalization is fit at
/// training time and travels with the model, not the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub config: ExtractionConfig,
    pub class_names: Vec<String>,
    pub vectors: Option<Vec<FeatureVector>>,
    pub tensors: Option<Vec<FeatureTensor>>,
    pub corrupt_files: Vec<String>,
}

impl FeatureCache {
    /// Dataset view over the cached vectors, if any were stored.
    pub fn vector_dataset(&self) -> Option<Dataset<FeatureVector>> {
        self.vectors.as_ref().map(|items| Dataset {
            items: items.clone(),
            class_names: self.class_names.clone(),
            normalization: None,
        })
    }

    /// Dataset view over the cached tensors, if any were stored.
    pub fn tensor_dataset(&self) -> Option<Dataset<FeatureTensor>> {
        self.tensors.as_ref().map(|items| Dataset {
            items: items.clone(),
            class_names: self.class_names.clone(),
            normalization: None,
        })
    }
}

/// Writes to `path` via a sibling temp file plus rename, so readers
/// never observe a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<(), PersistError> {
    write_atomic(path, &model_to_bytes(file))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile, PersistError> {
    model_from_bytes(&fs::read(path)?)
}

pub fn save_cache(cache: &FeatureCache, path: &Path) -> Result<(), PersistError> {
    write_atomic(path, &cache_to_bytes(cache))?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<FeatureCache, PersistError> {
    cache_from_bytes(&fs::read(path)?)
}

fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_usize(out: &mut Vec<u8>, v: usize) {
    put_u64(out, v as u64);
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_usize(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_strings(out: &mut Vec<u8>, items: &[String]) {
    put_usize(out, items.len());
    for s in items {
        put_string(out, s);
    }
}

/// Shape header (u32 dimension count, u64 extents) followed by the
/// values. `data.len()` must equal the shape product.
fn put_block(out: &mut Vec<u8>, shape: &[usize], data: &[f64]) {
    assert_eq!(shape.iter().product::<usize>(), data.len());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_usize(out, d);
    }
    for &v in data {
        put_f64(out, v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        if n > self.remaining() {
            return Err(malformed("unexpected end of file"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, PersistError> {
        self.u64()?
            .try_into()
            .map_err(|_| malformed("count exceeds platform usize"))
    }

    fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, PersistError> {
        let len = self.usize()?;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| malformed("string is not valid UTF-8"))
    }

    fn strings(&mut self) -> Result<Vec<String>, PersistError> {
        let n = self.usize()?;
        let mut out = Vec::new();
        for _ in 0..n {
            out.push(self.string()?);
        }
        Ok(out)
    }

    /// Reads a shaped value block, insisting on `want_ndim` dimensions.
    fn block(&mut self, want_ndim: usize) -> Result<(Vec<usize>, Vec<f64>), PersistError> {
        let ndim = self.u32()? as usize;
        if ndim != want_ndim {
            return Err(malformed(format!(
                "expected a {want_ndim}-d block, found {ndim}-d"
            )));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut total: usize = 1;
        for _ in 0..ndim {
            let d = self.usize()?;
            total = total
                .checked_mul(d)
                .ok_or_else(|| malformed("block shape overflows"))?;
            shape.push(d);
        }
        let byte_len = total
            .checked_mul(8)
            .ok_or_else(|| malformed("block shape overflows"))?;
        let bytes = self.take(byte_len)?;
        let mut data = Vec::with_capacity(total);
        for chunk in bytes.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok((shape, data))
    }

    fn finish(&self) -> Result<(), PersistError> {
        if self.pos != self.buf.len() {
            return Err(malformed("trailing bytes after payload"));
        }
        Ok(())
    }
}

fn check_header(r: &mut Reader, expected: &[u8; 4]) -> Result<(), PersistError> {
    let magic = r.take(4)?;
    if magic != expected {
        return Err(PersistError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    Ok(())
}

pub fn model_to_bytes(file: &ModelFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_string(&mut out, file.model.kind());
    put_strings(&mut out, &file.class_names);
    match &file.normalization {
        None => put_u8(&mut out, 0),
        Some(stats) => {
            put_u8(&mut out, 1);
            put_block(&mut out, &[stats.mean.len()], &stats.mean);
            put_block(&mut out, &[stats.std.len()], &stats.std);
        }
    }
    match &file.model {
        SavedModel::Mlp(m) => encode_mlp(&mut out, m),
        SavedModel::Knn(m) => encode_knn(&mut out, m),
        SavedModel::Cnn(m) => encode_cnn(&mut out, m),
        SavedModel::Forest(m) => encode_forest(&mut out, m),
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelFile, PersistError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MODEL_MAGIC)?;
    let tag = r.string()?;
    let class_names = r.strings()?;
    let normalization = match r.u8()? {
        0 => None,
        1 => {
            let (_, mean) = r.block(1)?;
            let (_, std) = r.block(1)?;
            if mean.len() != std.len() {
                return Err(malformed("normalization mean/std lengths disagree"));
            }
            Some(NormStats { mean, std })
        }
        other => return Err(malformed(format!("unknown normalization flag {other}"))),
    };
    let model = match tag.as_str() {
        "mlp" => SavedModel::Mlp(decode_mlp(&mut r)?),
        "knn" => SavedModel::Knn(decode_knn(&mut r)?),
        "cnn" => SavedModel::Cnn(decode_cnn(&mut r)?),
        "random_forest" => SavedModel::Forest(decode_forest(&mut r)?),
        other => return Err(malformed(format!("unknown model tag {other:?}"))),
    };
    r.finish()?;
    Ok(ModelFile {
        model,
        class_names,
        normalization,
    })
}

fn encode_mlp(out: &mut Vec<u8>, m: &MlpModel) {
    put_block(out, &[m.w1.rows(), m.w1.cols()], m.w1.as_slice());
    put_block(out, &[m.b1.len()], &m.b1);
    put_block(out, &[m.w2.rows(), m.w2.cols()], m.w2.as_slice());
    put_block(out, &[m.b2.len()], &m.b2);
}

fn decode_mlp(r: &mut Reader) -> Result<MlpModel, PersistError> {
    let (w1_shape, w1) = r.block(2)?;
    let (b1_shape, b1) = r.block(1)?;
    let (w2_shape, w2) = r.block(2)?;
    let (b2_shape, b2) = r.block(1)?;
    if b1_shape[0] != w1_shape[0] || w2_shape[1] != w1_shape[0] || b2_shape[0] != w2_shape[0] {
        return Err(malformed("mlp layer shapes disagree"));
    }
    Ok(MlpModel {
        w1: Matrix::from_rows(w1_shape[0], w1_shape[1], w1),
        b1,
        w2: Matrix::from_rows(w2_shape[0], w2_shape[1], w2),
        b2,
    })
}

fn encode_knn(out: &mut Vec<u8>, m: &KnnModel) {
    put_usize(out, m.k);
    put_block(out, &[m.points.rows(), m.points.cols()], m.points.as_slice());
    put_usize(out, m.labels.len());
    for &l in &m.labels {
        put_usize(out, l);
    }
}

fn decode_knn(r: &mut Reader) -> Result<KnnModel, PersistError> {
    let k = r.usize()?;
    if k == 0 {
        return Err(malformed("knn k must be >= 1"));
    }
    let (shape, data) = r.block(2)?;
    let n = r.usize()?;
    if n != shape[0] {
        return Err(malformed("knn label count disagrees with point rows"));
    }
    let mut labels = Vec::new();
    for _ in 0..n {
        labels.push(r.usize()?);
    }
    Ok(KnnModel {
        points: Matrix::from_rows(shape[0], shape[1], data),
        labels,
        k,
    })
}

fn encode_cnn(out: &mut Vec<u8>, m: &CnnModel) {
    let c = &m.config;
    put_usize(out, c.input_height);
    put_usize(out, c.input_width);
    put_usize(out, c.n_classes);
    put_usize(out, c.conv1_filters);
    put_usize(out, c.conv2_filters);
    match c.dense1_units {
        None => put_u8(out, 0),
        Some(u) => {
            put_u8(out, 1);
            put_usize(out, u);
        }
    }
    put_usize(out, c.dense2_units);
    put_f64(out, c.dropout_rate);
    put_block(out, &[m.params.len()], &m.params);
}

fn decode_cnn(r: &mut Reader) -> Result<CnnModel, PersistError> {
    let input_height = r.usize()?;
    let input_width = r.usize()?;
    let n_classes = r.usize()?;
    let conv1_filters = r.usize()?;
    let conv2_filters = r.usize()?;
    let dense1_units = match r.u8()? {
        0 => None,
        1 => Some(r.usize()?),
        other => return Err(malformed(format!("unknown dense1 flag {other}"))),
    };
    let dense2_units = r.usize()?;
    let dropout_rate = r.f64()?;
    let config = CnnConfig {
        input_height,
        input_width,
        n_classes,
        conv1_filters,
        conv2_filters,
        dense1_units,
        dense2_units,
        dropout_rate,
    };
    let expected =
        cnn::param_count(&config).map_err(|e| malformed(format!("invalid cnn config: {e}")))?;
    let (_, params) = r.block(1)?;
    if params.len() != expected {
        return Err(malformed(format!(
            "cnn parameter block holds {} values, expected {expected}",
            params.len()
        )));
    }
    Ok(CnnModel { config, params })
}

fn encode_forest(out: &mut Vec<u8>, m: &ForestModel) {
    let c = &m.config;
    put_usize(out, c.n_estimators);
    put_usize(out, c.max_depth);
    put_usize(out, c.min_split);
    match c.feature_subsample {
        None => put_u8(out, 0),
        Some(k) => {
            put_u8(out, 1);
            put_usize(out, k);
        }
    }
    put_u64(out, c.seed);
    put_usize(out, m.n_features);
    put_usize(out, m.n_classes);
    put_usize(out, m.trees.len());
    for tree in &m.trees {
        encode_node(out, tree);
    }
}

fn encode_node(out: &mut Vec<u8>, node: &TreeNode) {
    match node {
        TreeNode::Leaf { class_counts } => {
            put_u8(out, 0);
            put_usize(out, class_counts.len());
            for &c in class_counts {
                put_usize(out, c);
            }
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            put_u8(out, 1);
            put_usize(out, *feature);
            put_f64(out, *threshold);
            encode_node(out, left);
            encode_node(out, right);
        }
    }
}

fn decode_forest(r: &mut Reader) -> Result<ForestModel, PersistError> {
    let n_estimators = r.usize()?;
    let max_depth = r.usize()?;
    let min_split = r.usize()?;
    let feature_subsample = match r.u8()? {
        0 => None,
        1 => Some(r.usize()?),
        other => return Err(malformed(format!("unknown feature subsample flag {other}"))),
    };
    let seed = r.u64()?;
    let n_features = r.usize()?;
    let n_classes = r.usize()?;
    let n_trees = r.usize()?;
    let mut trees = Vec::new();
    for _ in 0..n_trees {
        trees.push(decode_node(r, n_features, n_classes, 0)?);
    }
    Ok(ForestModel {
        trees,
        config: ForestConfig {
            n_estimators,
            max_depth,
            min_split,
            feature_subsample,
            seed,
        },
        n_features,
        n_classes,
    })
}

fn decode_node(
    r: &mut Reader,
    n_features: usize,
    n_classes: usize,
    depth: usize,
) -> Result<TreeNode, PersistError> {
    if depth > MAX_TREE_DEPTH {
        return Err(malformed("tree nesting exceeds depth limit"));
    }
    match r.u8()? {
        0 => {
            let n = r.usize()?;
            if n != n_classes {
                return Err(malformed("leaf count length disagrees with class count"));
            }
            let mut class_counts = Vec::new();
            for _ in 0..n {
                class_counts.push(r.usize()?);
            }
            Ok(TreeNode::Leaf { class_counts })
        }
        1 => {
            let feature = r.usize()?;
            if feature >= n_features {
                return Err(malformed("split feature out of range"));
            }
            let threshold = r.f64()?;
            let left = Box::new(decode_node(r, n_features, n_classes, depth + 1)?);
            let right = Box::new(decode_node(r, n_features, n_classes, depth + 1)?);
            Ok(TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            })
        }
        other => Err(malformed(format!("unknown tree node tag {other}"))),
    }
}

pub fn cache_to_bytes(cache: &FeatureCache) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    encode_extraction(&mut out, &cache.config);
    put_strings(&mut out, &cache.class_names);
    put_strings(&mut out, &cache.corrupt_files);
    match &cache.vectors {
        None => put_u8(&mut out, 0),
        Some(items) => {
            put_u8(&mut out, 1);
            put_usize(&mut out, items.len());
            for item in items {
                put_string(&mut out, &item.source_id);
                put_usize(&mut out, item.label_index);
                put_block(&mut out, &[item.values.len()], &item.values);
            }
        }
    }
    match &cache.tensors {
        None => put_u8(&mut out, 0),
        Some(items) => {
            put_u8(&mut out, 1);
            put_usize(&mut out, items.len());
            for item in items {
                put_string(&mut out, &item.source_id);
                put_usize(&mut out, item.label_index);
                put_block(
                    &mut out,
                    &[item.grid.rows(), item.grid.cols()],
                    item.grid.as_slice(),
                );
            }
        }
    }
    out
}

pub fn cache_from_bytes(bytes: &[u8]) -> Result<FeatureCache, PersistError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, CACHE_MAGIC)?;
    let config = decode_extraction(&mut r)?;
    let class_names = r.strings()?;
    let corrupt_files = r.strings()?;
    let n_classes = class_names.len();
    let vectors = match r.u8()? {
        0 => None,
        1 => {
            let n = r.usize()?;
            let mut items = Vec::new();
            for _ in 0..n {
                let source_id = r.string()?;
                let label_index = r.usize()?;
                if label_index >= n_classes {
                    return Err(malformed("vector label out of range"));
                }
                let (_, values) = r.block(1)?;
                items.push(FeatureVector {
                    values,
                    label_index,
                    source_id,
                });
            }
            Some(items)
        }
        other => return Err(malformed(format!("unknown vectors flag {other}"))),
    };
    let tensors = match r.u8()? {
        0 => None,
        1 => {
            let n = r.usize()?;
            let mut items = Vec::new();
            for _ in 0..n {
                let source_id = r.string()?;
                let label_index = r.usize()?;
                if label_index >= n_classes {
                    return Err(malformed("tensor label out of range"));
                }
                let (shape, data) = r.block(2)?;
                items.push(FeatureTensor {
                    grid: Matrix::from_rows(shape[0], shape[1], data),
                    label_index,
                    source_id,
                });
            }
            Some(items)
        }
        other => return Err(malformed(format!("unknown tensors flag {other}"))),
    };
    r.finish()?;
    Ok(FeatureCache {
        config,
        class_names,
        vectors,
        tensors,
        corrupt_files,
    })
}

fn encode_extraction(out: &mut Vec<u8>, cfg: &ExtractionConfig) {
    put_usize(out, cfg.stft.n_fft);
    put_usize(out, cfg.stft.hop);
    put_u8(
        out,
        match cfg.stft.window {
            Window::Hann => 0,
        },
    );
    put_usize(out, cfg.n_mels);
    put_usize(out, cfg.n_mfcc);
    put_usize(out, cfg.max_frames);
}

fn decode_extraction(r: &mut Reader) -> Result<ExtractionConfig, PersistError> {
    let n_fft = r.usize()?;
    let hop = r.usize()?;
    let window = match r.u8()? {
        0 => Window::Hann,
        other => return Err(malformed(format!("unknown window tag {other}"))),
    };
    let n_mels = r.usize()?;
    let n_mfcc = r.usize()?;
    let max_frames = r.usize()?;
    Ok(ExtractionConfig {
        stft: StftConfig { n_fft, hop, window },
        n_mels,
        n_mfcc,
        max_frames,
    })
}
