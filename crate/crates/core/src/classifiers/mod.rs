//! Row-level classifiers and image-level aggregation.
//!
//! Every model consumes feature rows (one descriptor each) and returns a
//! label plus a normalized per-class score vector per row. Images are then
//! labeled by voting over their rows.

mod forest;
mod kdtree;
mod knn;
mod svm;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pairing::JointFeatureMap;

pub use forest::{train_forest, DecisionTree, ForestConfig, ForestModel};
pub use kdtree::{squared_distance, KdTree, Neighbor};
pub use knn::{train_knn, KnnConfig, KnnModel, KDTREE_MAX_DIM};
pub use svm::{train_linear_svm, LinearSvmConfig, SvmModel};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class; at least 2 are required")]
    SingleClass,
    #[error("row has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("unsupported classifier: {0}")]
    Unsupported(String),
    #[error("cannot classify an empty feature map")]
    EmptyMap,
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Feature rows with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRows {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl TrainingRows {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self, ClassifierError> {
        let rows = Self { vectors, labels, n_classes };
        rows.validate()?;
        Ok(rows)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        if self.vectors.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        if self.labels.len() != self.vectors.len() {
            return Err(ClassifierError::InvalidConfig(format!(
                "{} labels for {} rows",
                self.labels.len(),
                self.vectors.len()
            )));
        }
        let dim = self.dim();
        if let Some(v) = self.vectors.iter().find(|v| v.len() != dim) {
            return Err(ClassifierError::DimensionMismatch { expected: dim, found: v.len() });
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(ClassifierError::LabelOutOfRange { label, n_classes: self.n_classes });
        }
        Ok(())
    }

    fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.n_classes];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    }
}

/// Per-dimension standardization fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Zero mean, unit variance per dimension; constant dimensions keep scale 1.
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        let dim = vectors.first().map_or(0, Vec::len);
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for v in vectors {
            var.iter_mut().zip(v.iter().zip(&mean)).for_each(|(s, (x, m))| *s += (x - m) * (x - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// A row-level prediction: label and per-class scores summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct RowPrediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

impl RowPrediction {
    /// Picks the highest score, lowest class index on ties.
    pub(crate) fn from_scores(scores: Vec<f64>) -> Self {
        let label = argmax(&scores);
        Self { label, scores }
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Classifier selection and hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Knn(KnnConfig),
    LinearSvm(LinearSvmConfig),
    RandomForest(ForestConfig),
    /// Kernel SVM with one-vs-one decisions. Accepted by the config parser
    /// only so it can be rejected with a clear message.
    SvmRbf {},
}

impl ClassifierConfig {
    /// The three supported classifiers with default settings.
    pub fn defaults() -> Vec<ClassifierConfig> {
        vec![
            ClassifierConfig::LinearSvm(LinearSvmConfig::default()),
            ClassifierConfig::Knn(KnnConfig::default()),
            ClassifierConfig::RandomForest(ForestConfig::default()),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierConfig::Knn(_) => "knn",
            ClassifierConfig::LinearSvm(_) => "linear_svm",
            ClassifierConfig::RandomForest(_) => "random_forest",
            ClassifierConfig::SvmRbf {} => "svm_rbf",
        }
    }

    /// Column header used in timing tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ClassifierConfig::Knn(_) => "k-NN",
            ClassifierConfig::LinearSvm(_) => "SVM-Linear",
            ClassifierConfig::RandomForest(_) => "RF",
            ClassifierConfig::SvmRbf {} => "SVM-rbf",
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            ClassifierConfig::Knn(c) => c.validate(),
            ClassifierConfig::LinearSvm(c) => c.validate(),
            ClassifierConfig::RandomForest(c) => c.validate(),
            ClassifierConfig::SvmRbf {} => Err(ClassifierError::Unsupported(
                "svm_rbf (kernel SVM with one-vs-one decisions) is not implemented; use linear_svm, knn or random_forest"
                    .into(),
            )),
        }
    }

    pub fn train(&self, rows: &TrainingRows) -> Result<Model, ClassifierError> {
        self.validate()?;
        Ok(match self {
            ClassifierConfig::Knn(c) => Model::Knn(train_knn(rows, c)?),
            ClassifierConfig::LinearSvm(c) => Model::LinearSvm(train_linear_svm(rows, c)?),
            ClassifierConfig::RandomForest(c) => Model::RandomForest(train_forest(rows, c)?),
            ClassifierConfig::SvmRbf {} => unreachable!("rejected by validate"),
        })
    }
}

/// A trained classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Knn(KnnModel),
    LinearSvm(SvmModel),
    RandomForest(ForestModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Knn(m) => m.dim(),
            Model::LinearSvm(m) => m.dim(),
            Model::RandomForest(m) => m.dim(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Knn(m) => m.n_classes(),
            Model::LinearSvm(m) => m.n_classes(),
            Model::RandomForest(m) => m.n_classes(),
        }
    }

    fn predict_one(&self, row: &[f64]) -> RowPrediction {
        match self {
            Model::Knn(m) => m.predict_one(row),
            Model::LinearSvm(m) => m.predict_one(row),
            Model::RandomForest(m) => m.predict_one(row),
        }
    }
}

/// Predicts every row; fails if any row has the wrong dimension.
pub fn predict_rows<'a>(
    model: &Model,
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<Vec<RowPrediction>, ClassifierError> {
    let dim = model.dim();
    rows.into_iter()
        .map(|row| {
            if row.len() != dim {
                return Err(ClassifierError::DimensionMismatch { expected: dim, found: row.len() });
            }
            Ok(model.predict_one(row))
        })
        .collect()
}

/// How row predictions are combined into an image label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Most frequent row label; ties go to the larger summed score, then the lower class.
    #[default]
    MajorityVote,
    /// Class with the highest mean row score.
    MeanScore,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImagePrediction {
    pub label: usize,
    /// Winning vote fraction (majority vote) or winning mean score.
    pub confidence: f64,
}

/// Combines row predictions of one image.
pub fn aggregate_rows(preds: &[RowPrediction], n_classes: usize, rule: Aggregation) -> Result<ImagePrediction, ClassifierError> {
    if preds.is_empty() {
        return Err(ClassifierError::EmptyMap);
    }
    // per-class sums over sorted values
    let summed: Vec<f64> = (0..n_classes)
        .map(|c| {
            let mut col: Vec<f64> = preds.iter().map(|p| p.scores[c]).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum()
        })
        .collect();
    let n = preds.len() as f64;
    match rule {
        Aggregation::MajorityVote => {
            let mut votes = vec![0usize; n_classes];
            preds.iter().for_each(|p| votes[p.label] += 1);
            let mut best = 0;
            for c in 1..n_classes {
                if votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] > summed[best]) {
                    best = c;
                }
            }
            Ok(ImagePrediction {
                label: best,
                confidence: votes[best] as f64 / n,
            })
        }
        Aggregation::MeanScore => {
            let best = argmax(&summed);
            Ok(ImagePrediction {
                label: best,
                confidence: summed[best] / n,
            })
        }
    }
}

/// Labels one image from its joint feature map.
pub fn predict_image(model: &Model, map: &JointFeatureMap, rule: Aggregation) -> Result<ImagePrediction, ClassifierError> {
    if map.is_empty() {
        return Err(ClassifierError::EmptyMap);
    }
    let preds = predict_rows(model, map.vectors())?;
    aggregate_rows(&preds, model.n_classes(), rule)
}

const MODEL_MAGIC: &[u8; 4] = b"PWMD";
const MODEL_VERSION: u32 = 1;

/// Serializes a model as `magic | u32 version | u32 len | config JSON | u64 len | model JSON`
/// (little-endian lengths).
pub fn encode_model(config: &ClassifierConfig, model: &Model) -> Result<Vec<u8>, ClassifierError> {
    let err = |e: serde_json::Error| ClassifierError::ModelFile(e.to_string());
    let cfg = serde_json::to_vec(config).map_err(err)?;
    let payload = serde_json::to_vec(model).map_err(err)?;
    let mut out = Vec::with_capacity(20 + cfg.len() + payload.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<(ClassifierConfig, Model), ClassifierError> {
    let bad = |m: &str| ClassifierError::ModelFile(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(bad("missing PWMD magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(ClassifierError::ModelFile(format!("unsupported model version {version}")));
    }
    let cfg_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cfg_end = 12usize.checked_add(cfg_len).filter(|&e| e + 8 <= bytes.len()).ok_or_else(|| bad("truncated config"))?;
    let payload_len = u64::from_le_bytes(bytes[cfg_end..cfg_end + 8].try_into().unwrap()) as usize;
    let payload = &bytes[cfg_end + 8..];
    if payload.len() != payload_len {
        return Err(bad("payload length does not match header"));
    }
    let err = |e: serde_json::Error| ClassifierError::ModelFile(e.to_string());
    let config = serde_json::from_slice(&bytes[12..cfg_end]).map_err(err)?;
    let model = serde_json::from_slice(payload).map_err(err)?;
    Ok((config, model))
}

pub fn save_model(path: &Path, config: &ClassifierConfig, model: &Model) -> Result<(), ClassifierError> {
    fs::write(path, encode_model(config, model)?).map_err(|e| ClassifierError::ModelFile(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<(ClassifierConfig, Model), ClassifierError> {
    let bytes = fs::read(path).map_err(|e| ClassifierError::ModelFile(format!("{}: {e}", path.display())))?;
    decode_model(&bytes)
}
