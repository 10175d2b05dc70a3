//! Repeated train/test protocol, confusion-matrix metrics and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{predict_image, Aggregation, ClassifierConfig, ClassifierError, TrainingRows};
use crate::pairing::{FeatureMode, JointFeatureMap, PairingError};
use crate::pipeline::Corpus;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("confusion matrix is empty or all zero")]
    EmptyMatrix,
    #[error("confusion matrix must be square")]
    NotSquare,
    #[error("invalid protocol config: {0}")]
    InvalidConfig(String),
    #[error("dataset has no images")]
    EmptyDataset,
    #[error("class {class:?} has {count} image(s); at least 2 are required")]
    TooFewImages { class: String, count: usize },
    #[error("image {0:?} has no feature rows")]
    EmptyImage(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Counts indexed by `[true class][predicted class]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, EvaluationError> {
        let k = counts.len();
        if counts.iter().any(|row| row.len() != k) {
            return Err(EvaluationError::NotSquare);
        }
        Ok(Self { counts })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// One-vs-rest metrics of a single class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub specificity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub specificity: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Notes on undefined ratios that were replaced by a convention.
    pub degenerate: Vec<String>,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "f1", "recall", "precision", "specificity"];

impl MetricsReport {
    /// The five headline metrics in `METRIC_NAMES` order.
    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.f1, self.recall, self.precision, self.specificity]
    }

    fn with_values(&mut self, v: [f64; 5]) {
        [self.accuracy, self.f1, self.recall, self.precision, self.specificity] = v;
    }
}

/// `num / den` as an unevaluated sum `hi + lo`, or `None` when `den == 0`.
fn ratio(num: u64, den: u64) -> Option<(f64, f64)> {
    (den > 0).then(|| {
        let (p, q) = (num as f64, den as f64);
        let hi = p / q;
        (hi, (-hi).mul_add(q, p) / q)
    })
}

/// Mean of `hi + lo` pairs with compensated summation, so macro averages of
/// exact fractions round like the exact rational result.
fn mean_of_parts(parts: &[(f64, f64)]) -> f64 {
    let (mut s, mut e) = (0.0f64, 0.0f64);
    for &(hi, lo) in parts {
        let t = s + hi;
        e += if s.abs() >= hi.abs() { (s - t) + hi } else { (hi - t) + s };
        e += lo;
        s = t;
    }
    let k = parts.len() as f64;
    let q = s / k;
    q + ((-q).mul_add(k, s) + e) / k
}

/// Macro-averaged one-vs-rest metrics.
///
/// Undefined ratios follow fixed conventions and are listed in `degenerate`:
/// recall and F1 are 0 for a class without positives, precision is 0 for a
/// class never predicted, specificity is 1 for a class without negatives.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsReport, EvaluationError> {
    let total = cm.total();
    if cm.n_classes() == 0 || total == 0 {
        return Err(EvaluationError::EmptyMatrix);
    }
    let k = cm.n_classes();
    let mut degenerate = Vec::new();
    // per class: accuracy, f1, recall, precision, specificity
    let parts: Vec<[(f64, f64); 5]> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let fn_ = cm.counts[c].iter().sum::<u64>() - tp;
            let fp = cm.counts.iter().map(|row| row[c]).sum::<u64>() - tp;
            let tn = total - tp - fn_ - fp;
            let accuracy = ratio(tp + tn, total).expect("total is positive");
            let (recall, f1) = match ratio(tp, tp + fn_) {
                Some(r) => (r, ratio(2 * tp, 2 * tp + fp + fn_).expect("class has positives")),
                None => {
                    degenerate.push(format!("class {c}: no positives, recall and f1 set to 0"));
                    ((0.0, 0.0), (0.0, 0.0))
                }
            };
            let precision = ratio(tp, tp + fp).unwrap_or_else(|| {
                degenerate.push(format!("class {c}: never predicted, precision set to 0"));
                (0.0, 0.0)
            });
            let specificity = ratio(tn, tn + fp).unwrap_or_else(|| {
                degenerate.push(format!("class {c}: no negatives, specificity set to 1"));
                (1.0, 0.0)
            });
            [accuracy, f1, recall, precision, specificity]
        })
        .collect();
    let per_class = parts.iter().map(|p| class_from(p.map(|(hi, _)| hi))).collect();
    let mut report = MetricsReport {
        per_class,
        degenerate,
        ..Default::default()
    };
    report.with_values(std::array::from_fn(|m| mean_of_parts(&parts.iter().map(|p| p[m]).collect::<Vec<_>>())));
    Ok(report)
}

fn class_values(m: &ClassMetrics) -> [f64; 5] {
    [m.accuracy, m.f1, m.recall, m.precision, m.specificity]
}

fn class_from(v: [f64; 5]) -> ClassMetrics {
    ClassMetrics {
        accuracy: v[0],
        f1: v[1],
        recall: v[2],
        precision: v[3],
        specificity: v[4],
    }
}

/// Element-wise combination of reports (`mean` or `max`), including per-class entries and timings.
fn combine(reports: &[MetricsReport], op: fn(&[f64]) -> f64) -> MetricsReport {
    let pick = |f: &dyn Fn(&MetricsReport) -> f64| op(&reports.iter().map(f).collect::<Vec<_>>());
    let k = reports[0].per_class.len();
    let per_class = (0..k)
        .map(|c| {
            let mut v = [0.0; 5];
            for (i, slot) in v.iter_mut().enumerate() {
                *slot = pick(&|r| class_values(&r.per_class[c])[i]);
            }
            class_from(v)
        })
        .collect();
    let mut degenerate: Vec<String> = reports.iter().flat_map(|r| r.degenerate.iter().cloned()).collect();
    degenerate.sort();
    degenerate.dedup();
    let mut out = MetricsReport {
        per_class,
        degenerate,
        train_seconds: pick(&|r| r.train_seconds),
        test_seconds: pick(&|r| r.test_seconds),
        ..Default::default()
    };
    let mut v = [0.0; 5];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = pick(&|r| r.values()[i]);
    }
    out.with_values(v);
    out
}

fn mean_of(v: &[f64]) -> f64 {
    // a rounded mean may otherwise leave the range of its inputs by an ulp
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    (v.iter().sum::<f64>() / v.len() as f64).clamp(lo, max_of(v))
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub repeats: usize,
    /// Fraction of each class used for training.
    pub split: f64,
    pub seed: u64,
    pub stratified: bool,
    pub aggregation: Aggregation,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            repeats: 50,
            split: 0.5,
            seed: 0,
            stratified: true,
            aggregation: Aggregation::MajorityVote,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.repeats == 0 {
            return Err(EvaluationError::InvalidConfig("repeats must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(EvaluationError::InvalidConfig(format!("split must lie in (0, 1), got {}", self.split)));
        }
        Ok(())
    }
}

/// Joint feature maps with their image labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<(JointFeatureMap, usize)>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn check(&self, stratified: bool) -> Result<(), EvaluationError> {
        if self.items.is_empty() {
            return Err(EvaluationError::EmptyDataset);
        }
        if let Some((map, _)) = self.items.iter().find(|(m, _)| m.is_empty()) {
            return Err(EvaluationError::EmptyImage(map.image_id.clone()));
        }
        if self.items.len() < 2 {
            return Err(EvaluationError::TooFewImages {
                class: "<all>".into(),
                count: self.items.len(),
            });
        }
        if stratified {
            for (c, name) in self.class_names.iter().enumerate() {
                let count = self.items.iter().filter(|(_, l)| *l == c).count();
                if count < 2 {
                    return Err(EvaluationError::TooFewImages { class: name.clone(), count });
                }
            }
        }
        Ok(())
    }
}

fn train_count(n: usize, split: f64) -> usize {
    ((n as f64 * split).floor() as usize).clamp(1, n - 1)
}

/// Image indices `(train, test)` for one repeat. Each class (or the whole
/// set when not stratified) is shuffled and its first `floor(n * split)`
/// images, clamped to `1..n`, go to training.
pub fn split_indices(labels: &[usize], n_classes: usize, proto: &ProtocolConfig, repeat: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(proto.seed.wrapping_add(repeat as u64));
    let groups: Vec<Vec<usize>> = if proto.stratified {
        (0..n_classes)
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut g in groups {
        if g.is_empty() {
            continue;
        }
        g.shuffle(&mut rng);
        let cut = if g.len() < 2 { g.len() } else { train_count(g.len(), proto.split) };
        train.extend_from_slice(&g[..cut]);
        test.extend_from_slice(&g[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub average: MetricsReport,
    pub max: MetricsReport,
    pub repeats: Vec<MetricsReport>,
    pub matrices: Vec<ConfusionMatrix>,
}

impl ProtocolOutcome {
    /// Mean confusion counts over repeats.
    pub fn average_confusion(&self) -> Vec<Vec<f64>> {
        let k = self.matrices[0].n_classes();
        let n = self.matrices.len() as f64;
        (0..k)
            .map(|t| (0..k).map(|p| self.matrices.iter().map(|m| m.get(t, p) as f64).sum::<f64>() / n).collect())
            .collect()
    }

    /// Mean confusion counts with each true-class row scaled to sum to 1.
    pub fn average_confusion_row_normalized(&self) -> Vec<Vec<f64>> {
        self.average_confusion()
            .into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
            })
            .collect()
    }

    fn zero_timings(&mut self) {
        for r in std::iter::once(&mut self.average).chain(std::iter::once(&mut self.max)).chain(self.repeats.iter_mut()) {
            r.train_seconds = 0.0;
            r.test_seconds = 0.0;
        }
    }
}

/// Repeated split, train on every row of the training images, label each
/// test image by aggregating its row predictions.
pub fn run_protocol(
    ds: &LabeledDataset,
    clf: &ClassifierConfig,
    proto: &ProtocolConfig,
) -> Result<ProtocolOutcome, EvaluationError> {
    proto.validate()?;
    clf.validate()?;
    ds.check(proto.stratified)?;
    let k = ds.n_classes();
    let labels: Vec<usize> = ds.items.iter().map(|(_, l)| *l).collect();

    let mut reports = Vec::with_capacity(proto.repeats);
    let mut matrices = Vec::with_capacity(proto.repeats);
    for r in 0..proto.repeats {
        let (train, test) = split_indices(&labels, k, proto, r);
        let mut vectors = Vec::new();
        let mut row_labels = Vec::new();
        for &i in &train {
            let (map, label) = &ds.items[i];
            vectors.extend(map.vectors().map(<[f64]>::to_vec));
            row_labels.extend(std::iter::repeat_n(*label, map.len()));
        }
        let rows = TrainingRows::new(vectors, row_labels, k)?;

        let started = Instant::now();
        let model = clf.train(&rows)?;
        let train_seconds = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let mut cm = ConfusionMatrix::new(k);
        for &i in &test {
            let (map, label) = &ds.items[i];
            cm.record(*label, predict_image(&model, map, proto.aggregation)?.label);
        }
        let test_seconds = started.elapsed().as_secs_f64();

        let mut report = metrics_from_confusion(&cm)?;
        report.train_seconds = train_seconds;
        report.test_seconds = test_seconds;
        reports.push(report);
        matrices.push(cm);
    }
    Ok(ProtocolOutcome {
        average: combine(&reports, mean_of),
        max: combine(&reports, max_of),
        repeats: reports,
        matrices,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: FeatureMode,
    /// Feature rows per image, in dataset order.
    pub rows_per_image: Vec<usize>,
    pub outcome: ProtocolOutcome,
}

/// Paired minus non-paired, per headline metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub average: [f64; 5],
    pub max: [f64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub classifier: ClassifierConfig,
    pub runs: Vec<ModeRun>,
    pub deltas: MetricDeltas,
}

impl ComparisonReport {
    pub fn run(&self, mode: FeatureMode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Runs paired and non-paired modes (plus any `extra` modes) under identical
/// splits and reports the paired minus non-paired differences.
pub fn compare_modes(
    corpus: &Corpus,
    clf: &ClassifierConfig,
    proto: &ProtocolConfig,
    extra: &[FeatureMode],
) -> Result<ComparisonReport, EvaluationError> {
    let mut modes = vec![FeatureMode::Paired, FeatureMode::NonPaired];
    modes.extend(extra.iter().filter(|m| !modes.contains(m)).copied().collect::<Vec<_>>());
    let runs = modes
        .into_iter()
        .map(|mode| {
            let ds = corpus.dataset(mode)?;
            let rows_per_image = ds.items.iter().map(|(m, _)| m.len()).collect();
            Ok(ModeRun {
                mode,
                rows_per_image,
                outcome: run_protocol(&ds, clf, proto)?,
            })
        })
        .collect::<Result<Vec<_>, EvaluationError>>()?;
    let diff = |a: [f64; 5], b: [f64; 5]| std::array::from_fn(|i| a[i] - b[i]);
    let (p, n) = (&runs[0].outcome, &runs[1].outcome);
    let deltas = MetricDeltas {
        average: diff(p.average.values(), n.average.values()),
        max: diff(p.max.values(), n.max.values()),
    };
    Ok(ComparisonReport {
        classifier: clf.clone(),
        runs,
        deltas,
    })
}

/// Zeroes every timing field so report bytes depend only on inputs and seeds.
pub fn canonicalize(reports: &mut [ComparisonReport]) {
    for rep in reports {
        for run in &mut rep.runs {
            run.outcome.zero_timings();
        }
    }
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

fn grid_csv(grid: &[Vec<f64>]) -> String {
    let k = grid.len();
    let mut s = String::from("true\\predicted");
    (0..k).for_each(|c| write!(s, ",{c}").unwrap());
    s.push('\n');
    for (t, row) in grid.iter().enumerate() {
        writeln!(s, "{t},{}", fmt_row(row.iter().copied())).unwrap();
    }
    s
}

/// Average and max metrics of one run as CSV.
pub fn metrics_csv(outcome: &ProtocolOutcome) -> String {
    let mut s = format!("statistic,{},train_seconds,test_seconds\n", METRIC_NAMES.join(","));
    for (name, r) in [("average", &outcome.average), ("max", &outcome.max)] {
        writeln!(s, "{name},{},{},{}", fmt_row(r.values()), r.train_seconds, r.test_seconds).unwrap();
    }
    s
}

/// Average train/test seconds per classifier (columns) for non-paired and paired features (rows).
pub fn timing_csv(reports: &[ComparisonReport]) -> String {
    const COLUMNS: [&str; 3] = ["SVM-Linear", "k-NN", "RF"];
    let column = |name: &str| reports.iter().find(|r| r.classifier.display_name() == name);
    let mut s = format!("phase,features,{}\n", COLUMNS.join(","));
    type Pick = fn(&MetricsReport) -> f64;
    let phases: [(&str, Pick); 2] = [("train", |m| m.train_seconds), ("test", |m| m.test_seconds)];
    for (phase, pick) in phases {
        for mode in [FeatureMode::NonPaired, FeatureMode::Paired] {
            write!(s, "{phase},{mode}").unwrap();
            for name in COLUMNS {
                match column(name).and_then(|r| r.run(mode)) {
                    Some(run) => write!(s, ",{:.6}", pick(&run.outcome.average)).unwrap(),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Paired minus non-paired differences for every classifier.
pub fn deltas_csv(reports: &[ComparisonReport]) -> String {
    let mut s = format!("classifier,statistic,{}\n", METRIC_NAMES.join(","));
    for r in reports {
        writeln!(s, "{},average,{}", r.classifier.name(), fmt_row(r.deltas.average)).unwrap();
        writeln!(s, "{},max,{}", r.classifier.name(), fmt_row(r.deltas.max)).unwrap();
    }
    s
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<PathBuf, EvaluationError> {
    fs::write(&path, contents).map_err(|source| EvaluationError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes the full JSON report, per-run metric and confusion CSVs, the delta
/// table and the timing table. Returns the written paths in order.
pub fn write_reports(dir: &Path, run_id: &str, reports: &[ComparisonReport]) -> Result<Vec<PathBuf>, EvaluationError> {
    fs::create_dir_all(dir).map_err(|source| EvaluationError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let json = serde_json::to_vec_pretty(reports)?;
    written.push(write_file(dir.join(format!("{run_id}_report.json")), &json)?);
    for rep in reports {
        for run in &rep.runs {
            let stem = format!("{run_id}_{}_{}", run.mode, rep.classifier.name());
            written.push(write_file(dir.join(format!("{stem}_metrics.csv")), metrics_csv(&run.outcome).as_bytes())?);
            let avg = grid_csv(&run.outcome.average_confusion());
            written.push(write_file(dir.join(format!("{stem}_confusion_avg.csv")), avg.as_bytes())?);
            let norm = grid_csv(&run.outcome.average_confusion_row_normalized());
            written.push(write_file(dir.join(format!("{stem}_confusion_avg_rownorm.csv")), norm.as_bytes())?);
        }
    }
    written.push(write_file(dir.join(format!("{run_id}_deltas.csv")), deltas_csv(reports).as_bytes())?);
    written.push(write_file(dir.join(format!("{run_id}_timing.csv")), timing_csv(reports).as_bytes())?);
    Ok(written)
}
