//! Batch front end: `detect`, `features`, `evaluate` and `generate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pairwise_core::classifiers::{ClassifierConfig, ClassifierError};
use pairwise_core::corner_detect::{write_points_csv, CornerConfig, CornerError};
use pairwise_core::evaluation::{canonicalize, compare_modes, write_reports, EvaluationError, ProtocolConfig};
use pairwise_core::image_io::CropRect;
use pairwise_core::pairing::{joint_maps_to_file, FeatureMode, PairingError};
use pairwise_core::patch_descriptor::{DescriptorError, DescriptorSource};
use pairwise_core::pfv::{write_pfv1, write_pfv2, FeatureFile};
use pairwise_core::pipeline::{detect_all, extract_corpus, scan_dataset, Corpus, PipelineConfig, PipelineError};
use pairwise_core::synthetic::{write_dataset, SyntheticConfig};
use serde::{Deserialize, Serialize};

/// Everything a run needs. Missing fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// One subdirectory per class; labels follow the sorted directory names.
    pub dataset_root: PathBuf,
    /// `[width, height]` after cropping, or `null` to keep the size.
    pub resize: Option<(usize, usize)>,
    pub crop: Option<CropRect>,
    pub corner: CornerConfig,
    pub descriptor: DescriptorSource,
    /// Joint-map layout written by `features`.
    pub mode: FeatureMode,
    pub classifiers: Vec<ClassifierConfig>,
    pub protocol: ProtocolConfig,
    pub output_dir: PathBuf,
    /// Prefix of every report file.
    pub run_id: String,
    /// Chain untriangulable points along their dominant axis instead of leaving them unpaired.
    pub fallback: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            dataset_root: PathBuf::from("dataset"),
            resize: pipeline.resize,
            crop: None,
            corner: pipeline.corner,
            descriptor: pipeline.descriptor,
            mode: FeatureMode::Paired,
            classifiers: ClassifierConfig::defaults(),
            protocol: ProtocolConfig::default(),
            output_dir: PathBuf::from("out"),
            run_id: "run".into(),
            fallback: pipeline.fallback,
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            resize: self.resize,
            crop: self.crop,
            corner: self.corner.clone(),
            descriptor: self.descriptor.clone(),
            fallback: self.fallback,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: String| CliError::Config(e);
        self.corner.validate().map_err(|e| config(e.to_string()))?;
        self.descriptor.validate().map_err(|e| config(e.to_string()))?;
        self.protocol.validate().map_err(|e| config(e.to_string()))?;
        if self.classifiers.is_empty() {
            return Err(config("at least one classifier is required".into()));
        }
        for c in &self.classifiers {
            c.validate().map_err(|e| config(e.to_string()))?;
        }
        if let Some((w, h)) = self.resize {
            if w == 0 || h == 0 {
                return Err(config("resize dimensions must be positive".into()));
            }
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(config(format!("run_id {:?} must be a non-empty file name", self.run_id)));
        }
        if !self.dataset_root.is_dir() {
            return Err(config(format!("dataset_root {} is not a directory", self.dataset_root.display())));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Exit codes: 2 config, 3 data, 4 pipeline.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Pipeline(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Pipeline(_) => 4,
        }
    }

    fn stage(self, stage: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{stage}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{stage}: {m}")),
            CliError::Pipeline(m) => CliError::Pipeline(format!("{stage}: {m}")),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corner { source: CornerError::InvalidConfig(_), .. } => CliError::Config(e.to_string()),
            PipelineError::Descriptor(DescriptorError::UnsupportedDim(_) | DescriptorError::MissingImportPath) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::InvalidConfig(_)
            | EvaluationError::Classifier(ClassifierError::InvalidConfig(_) | ClassifierError::Unsupported(_)) => {
                CliError::Config(e.to_string())
            }
            EvaluationError::EmptyDataset | EvaluationError::TooFewImages { .. } | EvaluationError::EmptyImage(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Pipeline(e.to_string()),
        }
    }
}

impl From<PairingError> for CliError {
    fn from(e: PairingError) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "pairwise", version, about = "Interest-point patch features with Delaunay edge pairing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect corners; write one CSV per image and a summary flagging sparse images.
    Detect(RunArgs),
    /// Extract descriptors; write originals as PFV1 and joint maps of the configured mode as PFV2.
    Features(RunArgs),
    /// Run the repeated split protocol for every classifier and write reports.
    Evaluate(RunArgs),
    /// Write the synthetic textured-polygon dataset.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `protocol.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `mode` (paired, non_paired, horizontal).
    #[arg(long)]
    pub mode: Option<FeatureMode>,
    /// Zero all timing fields so reports are byte-reproducible.
    #[arg(long)]
    pub canonical: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Destination directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, default_value_t = 480)]
    pub width: usize,
    #[arg(long, default_value_t = 360)]
    pub height: usize,
}

/// Loads the config, applies flag overrides, validates, and echoes the
/// effective config into the output directory.
pub fn effective_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.protocol.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
    let echo = cfg.output_dir.join(format!("{}_config.json", cfg.run_id));
    let json = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Pipeline(e.to_string()))?;
    fs::write(&echo, json + "\n").map_err(|e| io_error(&echo, e))?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Detect(args) => cmd_detect(&effective_config(&args)?).map_err(|e| e.stage("detect")),
        Command::Features(args) => cmd_features(&effective_config(&args)?).map_err(|e| e.stage("features")),
        Command::Evaluate(args) => {
            cmd_evaluate(&effective_config(&args)?, args.canonical).map_err(|e| e.stage("evaluate"))
        }
        Command::Generate(args) => cmd_generate(&args).map_err(|e| e.stage("generate")),
    }
}

/// Writes `corners/<image_id>.csv` per image and `<run_id>_corners_summary.csv`.
pub fn cmd_detect(cfg: &RunConfig) -> Result<String, CliError> {
    let (_, entries) = scan_dataset(&cfg.dataset_root)?;
    let points = detect_all(&entries, &cfg.pipeline())?;
    let corner_dir = cfg.output_dir.join("corners");
    let mut summary = String::from("image_id,points,below_target\n");
    let mut flagged = Vec::new();
    for (entry, pts) in entries.iter().zip(&points) {
        let path = corner_dir.join(format!("{}.csv", entry.image_id));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        write_points_csv(pts, &path).map_err(|e| io_error(&path, e))?;
        let below = pts.len() < cfg.corner.min_points_target;
        if below {
            flagged.push(format!("{} ({} points)", entry.image_id, pts.len()));
        }
        writeln!(summary, "{},{},{}", entry.image_id, pts.len(), below).unwrap();
    }
    let path = cfg.output_dir.join(format!("{}_corners_summary.csv", cfg.run_id));
    fs::write(&path, summary).map_err(|e| io_error(&path, e))?;
    let mut out = format!("{} images, {} below {} points", entries.len(), flagged.len(), cfg.corner.min_points_target);
    for f in flagged {
        write!(out, "\n  {f}").unwrap();
    }
    Ok(out)
}

/// Per-image point and edge counts, with the reason for any pairing fallback.
fn corpus_summary(corpus: &Corpus) -> String {
    let mut s = String::from("image_id,label,points,edges,degenerate\n");
    for img in &corpus.images {
        let degenerate = img.graph.degenerate.as_ref().map_or(String::new(), |e| e.to_string());
        writeln!(s, "{},{},{},{},{}", img.image_id, img.label, img.originals.len(), img.graph.edges.len(), degenerate).unwrap();
    }
    s
}

/// Writes `<run_id>_features.pfv` (PFV1, originals) and `<run_id>_<mode>.pfv2`.
pub fn cmd_features(cfg: &RunConfig) -> Result<String, CliError> {
    let corpus = extract_corpus(&cfg.dataset_root, &cfg.pipeline())?;
    let originals = FeatureFile {
        dim: cfg.descriptor.dim(),
        records: corpus.images.iter().flat_map(|i| i.originals.iter().cloned()).collect(),
    };
    let pfv1 = cfg.output_dir.join(format!("{}_features.pfv", cfg.run_id));
    write_pfv1(&pfv1, &originals).map_err(|e| io_error(&pfv1, e))?;

    let maps = corpus
        .images
        .iter()
        .filter(|img| !img.originals.is_empty())
        .map(|img| img.joint_map(cfg.mode, corpus.slots))
        .collect::<Result<Vec<_>, _>>()?;
    let joint = joint_maps_to_file(&maps)?;
    let pfv2 = cfg.output_dir.join(format!("{}_{}.pfv2", cfg.run_id, cfg.mode));
    write_pfv2(&pfv2, &joint).map_err(|e| io_error(&pfv2, e))?;

    let summary = cfg.output_dir.join(format!("{}_corpus.csv", cfg.run_id));
    fs::write(&summary, corpus_summary(&corpus)).map_err(|e| io_error(&summary, e))?;
    Ok(format!(
        "{} records of dim {} -> {}\n{} {} rows -> {}",
        originals.records.len(),
        originals.dim,
        pfv1.display(),
        joint.records.len(),
        cfg.mode,
        pfv2.display()
    ))
}

/// Compares paired and non-paired features (plus the horizontal layout) for
/// every configured classifier and writes all report files.
pub fn cmd_evaluate(cfg: &RunConfig, canonical: bool) -> Result<String, CliError> {
    let corpus = extract_corpus(&cfg.dataset_root, &cfg.pipeline())?;
    let summary = cfg.output_dir.join(format!("{}_corpus.csv", cfg.run_id));
    fs::write(&summary, corpus_summary(&corpus)).map_err(|e| io_error(&summary, e))?;
    let mut reports = cfg
        .classifiers
        .iter()
        .map(|clf| {
            compare_modes(&corpus, clf, &cfg.protocol, &[FeatureMode::Horizontal])
                .map_err(|e| CliError::from(e).stage(clf.name()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if canonical {
        canonicalize(&mut reports);
    }
    let written = write_reports(&cfg.output_dir, &cfg.run_id, &reports)?;
    let mut out = String::from("classifier        mode         accuracy  f1      (average over repeats)\n");
    for rep in &reports {
        for run in &rep.runs {
            let a = &run.outcome.average;
            writeln!(out, "{:<17} {:<12} {:.4}    {:.4}", rep.classifier.display_name(), run.mode.name(), a.accuracy, a.f1).unwrap();
        }
    }
    write!(out, "{} report files in {}", written.len(), cfg.output_dir.display()).unwrap();
    Ok(out)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<String, CliError> {
    let cfg = SyntheticConfig {
        classes: args.classes,
        per_class: args.per_class,
        width: args.width,
        height: args.height,
        seed: args.seed,
        ..Default::default()
    };
    if !(1..=5).contains(&cfg.classes) || cfg.per_class == 0 || cfg.width < 40 || cfg.height < 40 {
        return Err(CliError::Config("need 1 to 5 classes, per_class >= 1 and images of at least 40x40".into()));
    }
    let names = write_dataset(&args.out, &cfg).map_err(|e| CliError::Pipeline(e.to_string()))?;
    Ok(format!("{} classes x {} images -> {}", names.len(), cfg.per_class, args.out.display()))
}
