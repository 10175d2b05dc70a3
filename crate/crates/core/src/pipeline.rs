//! Per-image feature extraction: preprocessing, corners, descriptors and pair graphs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corner_detect::{detect, CornerConfig, CornerError, InterestPoint};
use crate::evaluation::{EvaluationError, LabeledDataset};
use crate::image_io::{crop, load_image, resize, CropRect, GrayImage, ImageError};
use crate::pairing::{build_joint_map, FeatureMode, JointFeatureMap, PairGraph, PairingError};
use crate::patch_descriptor::{builtin_descriptor, match_records, mesh_patches, DescriptorError, DescriptorSource, FeatureRecord};
use crate::pfv;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "pgm", "pnm"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset layout: {0}")]
    Layout(String),
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("{image_id}: {source}")]
    Corner { image_id: String, source: CornerError },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Target `(width, height)` after the optional crop; `None` keeps the size.
    pub resize: Option<(usize, usize)>,
    pub crop: Option<CropRect>,
    pub corner: CornerConfig,
    pub descriptor: DescriptorSource,
    /// Chain points along their dominant axis when they cannot be triangulated.
    pub fallback: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resize: Some((480, 360)),
            crop: None,
            corner: CornerConfig::default(),
            descriptor: DescriptorSource::default(),
            fallback: true,
        }
    }
}

/// An image entry of a dataset on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetEntry {
    /// `class/file_stem`
    pub image_id: String,
    pub label: usize,
    pub path: PathBuf,
}

/// Lists `root/<class>/<image>` with classes and images in sorted order.
pub fn scan_dataset(root: &Path) -> Result<(Vec<String>, Vec<DatasetEntry>), PipelineError> {
    let layout = |e: std::io::Error, p: &Path| PipelineError::Layout(format!("{}: {e}", p.display()));
    let mut classes: Vec<(String, PathBuf)> = fs::read_dir(root)
        .map_err(|e| layout(e, root))?
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(PipelineError::Layout(format!("{} has no class subdirectories", root.display())));
    }
    let mut entries = Vec::new();
    for (label, (name, dir)) in classes.iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| layout(e, dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(PipelineError::Layout(format!("class directory {} has no images", dir.display())));
        }
        for path in files {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy();
            entries.push(DatasetEntry {
                image_id: format!("{name}/{stem}"),
                label,
                path,
            });
        }
    }
    Ok((classes.into_iter().map(|(n, _)| n).collect(), entries))
}

/// Crop, then resize.
pub fn preprocess(img: &GrayImage, cfg: &PipelineConfig) -> Result<GrayImage, ImageError> {
    let cropped = match cfg.crop {
        Some(rect) => crop(img, rect)?,
        None => img.clone(),
    };
    match cfg.resize {
        Some((w, h)) => resize(&cropped, w, h),
        None => Ok(cropped),
    }
}

pub fn load_preprocessed(entry: &DatasetEntry, cfg: &PipelineConfig) -> Result<GrayImage, PipelineError> {
    let wrap = |source| PipelineError::Image { path: entry.path.clone(), source };
    preprocess(&load_image(&entry.path).map_err(wrap)?, cfg).map_err(wrap)
}

/// Corners of every dataset image, in entry order.
pub fn detect_all(entries: &[DatasetEntry], cfg: &PipelineConfig) -> Result<Vec<Vec<InterestPoint>>, PipelineError> {
    entries
        .par_iter()
        .map(|e| {
            let img = load_preprocessed(e, cfg)?;
            detect(&img, &cfg.corner).map_err(|source| PipelineError::Corner {
                image_id: e.image_id.clone(),
                source,
            })
        })
        .collect()
}

/// Features of one image and the graph pairing them.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatures {
    pub image_id: String,
    pub label: usize,
    pub originals: Vec<FeatureRecord>,
    pub graph: PairGraph,
}

impl ImageFeatures {
    pub fn new(image_id: String, label: usize, originals: Vec<FeatureRecord>, fallback: bool) -> Self {
        let points: Vec<(f64, f64)> = originals.iter().map(|r| r.point).collect();
        Self {
            image_id,
            label,
            graph: PairGraph::build(&points, fallback),
            originals,
        }
    }

    pub fn joint_map(&self, mode: FeatureMode, slots: usize) -> Result<JointFeatureMap, PairingError> {
        build_joint_map(&self.originals, &self.graph, mode, slots).map_err(|e| match e {
            PairingError::EmptyMap(_) => PairingError::EmptyMap(self.image_id.clone()),
            other => other,
        })
    }
}

/// Every image's features, ready to be assembled in any mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub class_names: Vec<String>,
    pub images: Vec<ImageFeatures>,
    /// Slot count of the horizontal mode.
    pub slots: usize,
}

impl Corpus {
    pub fn dataset(&self, mode: FeatureMode) -> Result<LabeledDataset, EvaluationError> {
        let items = self
            .images
            .par_iter()
            .map(|img| {
                if img.originals.is_empty() {
                    return Err(EvaluationError::EmptyImage(img.image_id.clone()));
                }
                Ok((img.joint_map(mode, self.slots)?, img.label))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LabeledDataset {
            items,
            class_names: self.class_names.clone(),
        })
    }

    /// Restricts the corpus to the given classes, relabelled in the given order.
    pub fn subset(&self, classes: &[usize]) -> Corpus {
        let images = self
            .images
            .iter()
            .filter_map(|img| {
                let pos = classes.iter().position(|&c| c == img.label)?;
                Some(ImageFeatures { label: pos, ..img.clone() })
            })
            .collect();
        Corpus {
            class_names: classes.iter().map(|&c| self.class_names[c].clone()).collect(),
            images,
            slots: self.slots,
        }
    }
}

/// An in-memory labelled image.
#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub image_id: String,
    pub label: usize,
    pub image: GrayImage,
}

/// Built-in descriptors of the detected points of already preprocessed images.
pub fn extract_builtin(images: &[LabeledImage], class_names: Vec<String>, cfg: &PipelineConfig) -> Result<Corpus, PipelineError> {
    let dim = cfg.descriptor.dim();
    let features = images
        .par_iter()
        .map(|li| {
            let points = detect(&li.image, &cfg.corner).map_err(|source| PipelineError::Corner {
                image_id: li.image_id.clone(),
                source,
            })?;
            let originals = mesh_patches(&li.image, &li.image_id, &points)
                .iter()
                .map(|p| builtin_descriptor(p, dim))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ImageFeatures::new(li.image_id.clone(), li.label, originals, cfg.fallback))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(Corpus {
        class_names,
        images: features,
        slots: cfg.corner.max_points,
    })
}

/// Loads, detects and describes every dataset image.
///
/// Imported descriptors are looked up by `(image_id, point_index)` where the
/// index is the position of the point in detection order.
pub fn extract_corpus(root: &Path, cfg: &PipelineConfig) -> Result<Corpus, PipelineError> {
    cfg.descriptor.validate()?;
    let (class_names, entries) = scan_dataset(root)?;
    match &cfg.descriptor {
        DescriptorSource::Builtin { .. } => {
            let images = entries
                .par_iter()
                .map(|e| {
                    Ok(LabeledImage {
                        image_id: e.image_id.clone(),
                        label: e.label,
                        image: load_preprocessed(e, cfg)?,
                    })
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            extract_builtin(&images, class_names, cfg)
        }
        DescriptorSource::Imported { dim, import_path } => {
            let path = import_path.as_ref().ok_or(DescriptorError::MissingImportPath)?;
            let points = detect_all(&entries, cfg)?;
            let keys: Vec<(String, u32)> = entries
                .iter()
                .zip(&points)
                .flat_map(|(e, pts)| (0..pts.len() as u32).map(|i| (e.image_id.clone(), i)))
                .collect();
            let file = pfv::read_pfv1(path).map_err(DescriptorError::from)?;
            let mut records = match_records(file, &keys, *dim)?.into_iter();
            let images = entries
                .iter()
                .zip(&points)
                .map(|(e, pts)| {
                    let originals: Vec<FeatureRecord> = records.by_ref().take(pts.len()).collect();
                    ImageFeatures::new(e.image_id.clone(), e.label, originals, cfg.fallback)
                })
                .collect();
            Ok(Corpus {
                class_names,
                images,
                slots: cfg.corner.max_points,
            })
        }
    }
}
