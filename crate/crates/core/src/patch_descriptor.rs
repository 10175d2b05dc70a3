//! Patches around interest points and the descriptors computed from them.
//!
//! Descriptors either come from the built-in handcrafted extractor or are
//! imported from a PFV1 file produced by an external embedding model.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corner_detect::InterestPoint;
use crate::image_io::GrayImage;
use crate::pfv::{self, PfvError};

/// Side length of every patch, in pixels.
pub const PATCH_SIZE: usize = 40;
/// Descriptor dimension used for imported embeddings unless configured otherwise.
pub const IMPORTED_DIM: usize = 1000;
/// Default dimension of the built-in descriptor.
pub const BUILTIN_DIM: usize = 128;
/// Dimensions the built-in descriptor can produce.
pub const BUILTIN_DIMS: [usize; 4] = [64, 128, 256, 1000];

const POOL_GRID: usize = 8;
const POOL_CELL: usize = PATCH_SIZE / POOL_GRID;
const ORIENTATION_BINS: usize = 16;
const INTENSITY_LEN: usize = POOL_GRID * POOL_GRID;
const BLOCK_LEN: usize = INTENSITY_LEN + ORIENTATION_BINS;
const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("unsupported built-in descriptor dimension {0} (expected one of 64, 128, 256, 1000)")]
    UnsupportedDim(usize),
    #[error("imported descriptor source requires a path")]
    MissingImportPath,
    #[error("feature file lacks record for image {image_id:?} point {point_index}")]
    MissingKey { image_id: String, point_index: u32 },
    #[error("feature file repeats record for image {image_id:?} point {point_index}")]
    DuplicateKey { image_id: String, point_index: u32 },
    #[error("feature dimension mismatch: file has {found}, pipeline expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in record for image {image_id:?} point {point_index}")]
    NonFinite { image_id: String, point_index: u32 },
    #[error(transparent)]
    Format(#[from] PfvError),
}

/// Whether a feature row was extracted at a detected point or synthesized on an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    Paired,
}

/// One descriptor bound to its image and location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub image_id: String,
    /// Detection ordinal for originals; edge ordinal for paired rows.
    pub point_index: u32,
    pub point: (f64, f64),
    pub origin: Origin,
    pub vector: Vec<f64>,
}

impl FeatureRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// A `PATCH_SIZE` square block of intensities centered on an interest point.
///
/// The point sits at block index `(PATCH_SIZE / 2, PATCH_SIZE / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image_id: String,
    pub point_index: u32,
    pub center: (usize, usize),
    pub pixels: Vec<f64>,
}

impl Patch {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * PATCH_SIZE + x]
    }
}

/// Where descriptors come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DescriptorSource {
    Builtin {
        #[serde(default = "default_builtin_dim")]
        dim: usize,
    },
    Imported {
        #[serde(default = "default_imported_dim")]
        dim: usize,
        import_path: Option<PathBuf>,
    },
}

fn default_builtin_dim() -> usize {
    BUILTIN_DIM
}

fn default_imported_dim() -> usize {
    IMPORTED_DIM
}

impl Default for DescriptorSource {
    fn default() -> Self {
        DescriptorSource::Builtin { dim: BUILTIN_DIM }
    }
}

impl DescriptorSource {
    pub fn dim(&self) -> usize {
        match self {
            DescriptorSource::Builtin { dim } | DescriptorSource::Imported { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        match self {
            DescriptorSource::Builtin { dim } if !BUILTIN_DIMS.contains(dim) => {
                Err(DescriptorError::UnsupportedDim(*dim))
            }
            DescriptorSource::Imported { import_path: None, .. } => Err(DescriptorError::MissingImportPath),
            _ => Ok(()),
        }
    }
}

/// Cuts one patch per point, replicating edge pixels where the window leaves the image.
pub fn mesh_patches(img: &GrayImage, image_id: &str, points: &[InterestPoint]) -> Vec<Patch> {
    let half = (PATCH_SIZE / 2) as isize;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy) = (p.x as isize, p.y as isize);
            let mut pixels = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
            for dy in -half..half {
                for dx in -half..half {
                    pixels.push(img.get_clamped(cx + dx, cy + dy));
                }
            }
            Patch {
                image_id: image_id.to_string(),
                point_index: i as u32,
                center: (p.x, p.y),
                pixels,
            }
        })
        .collect()
}

/// Handcrafted descriptor of a patch.
///
/// One block is 64 mean-pooled intensities (8x8 cells, standardized to zero
/// mean and unit variance) followed by a 16-bin magnitude-weighted gradient
/// orientation histogram (L2-normalized). Dimension 64 keeps only the
/// intensity part; larger dimensions repeat the block and zero-pad the tail.
/// Values are rounded through `f32` so that descriptors survive a PFV1 round
/// trip unchanged.
pub fn builtin_descriptor(patch: &Patch, dim: usize) -> Result<FeatureRecord, DescriptorError> {
    if !BUILTIN_DIMS.contains(&dim) {
        return Err(DescriptorError::UnsupportedDim(dim));
    }
    let mut block = pooled_intensities(patch);
    block.extend(orientation_histogram(patch));

    let vector: Vec<f64> = if dim < BLOCK_LEN {
        block[..dim].to_vec()
    } else {
        let repeats = dim / BLOCK_LEN;
        let mut v = Vec::with_capacity(dim);
        for _ in 0..repeats {
            v.extend_from_slice(&block);
        }
        v.resize(dim, 0.0);
        v
    };
    Ok(FeatureRecord {
        image_id: patch.image_id.clone(),
        point_index: patch.point_index,
        point: (patch.center.0 as f64, patch.center.1 as f64),
        origin: Origin::Original,
        vector: vector.into_iter().map(|v| v as f32 as f64).collect(),
    })
}

fn pooled_intensities(patch: &Patch) -> Vec<f64> {
    let mut cells = vec![0.0; INTENSITY_LEN];
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            cells[(y / POOL_CELL) * POOL_GRID + x / POOL_CELL] += patch.get(x, y);
        }
    }
    let area = (POOL_CELL * POOL_CELL) as f64;
    cells.iter_mut().for_each(|c| *c /= area);

    let n = cells.len() as f64;
    let mean = cells.iter().sum::<f64>() / n;
    let var = cells.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    if var < VARIANCE_FLOOR {
        return vec![0.0; INTENSITY_LEN];
    }
    let sd = var.sqrt();
    cells.iter().map(|c| (c - mean) / sd).collect()
}

fn orientation_histogram(patch: &Patch) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, PATCH_SIZE as isize - 1) as usize;
        let cy = y.clamp(0, PATCH_SIZE as isize - 1) as usize;
        patch.get(cx, cy)
    };
    let mut hist = vec![0.0; ORIENTATION_BINS];
    for y in 0..PATCH_SIZE as isize {
        for x in 0..PATCH_SIZE as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += TAU;
            }
            let bin = ((angle / TAU * ORIENTATION_BINS as f64) as usize).min(ORIENTATION_BINS - 1);
            hist[bin] += mag;
        }
    }
    let norm = hist.iter().map(|h| h * h).sum::<f64>().sqrt();
    if norm > 0.0 {
        hist.iter_mut().for_each(|h| *h /= norm);
    }
    hist
}

/// Reads externally computed descriptors from a PFV1 file.
///
/// Returns exactly one record per `(image_id, point_index)` in `expected`,
/// in that order. Records in the file that are not expected are ignored.
pub fn import_features(
    path: &Path,
    expected: &[(String, u32)],
    dim: usize,
) -> Result<Vec<FeatureRecord>, DescriptorError> {
    let file = pfv::read_pfv1(path)?;
    match_records(file, expected, dim)
}

pub(crate) fn match_records(
    file: pfv::FeatureFile,
    expected: &[(String, u32)],
    dim: usize,
) -> Result<Vec<FeatureRecord>, DescriptorError> {
    if file.dim != dim {
        return Err(DescriptorError::DimensionMismatch {
            expected: dim,
            found: file.dim,
        });
    }
    let mut by_key: HashMap<(String, u32), FeatureRecord> = HashMap::with_capacity(file.records.len());
    for rec in file.records {
        if rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(DescriptorError::NonFinite {
                image_id: rec.image_id,
                point_index: rec.point_index,
            });
        }
        let key = (rec.image_id.clone(), rec.point_index);
        if by_key.contains_key(&key) {
            return Err(DescriptorError::DuplicateKey {
                image_id: key.0,
                point_index: key.1,
            });
        }
        by_key.insert(key, rec);
    }
    expected
        .iter()
        .map(|key| {
            by_key.remove(key).ok_or_else(|| DescriptorError::MissingKey {
                image_id: key.0.clone(),
                point_index: key.1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfv::{write_pfv1, FeatureFile};

    fn patch_from(f: impl Fn(usize, usize) -> f64) -> Patch {
        let mut pixels = Vec::new();
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                pixels.push(f(x, y));
            }
        }
        Patch { image_id: "img".into(), point_index: 0, center: (20, 20), pixels }
    }

    fn pt(x: usize, y: usize) -> InterestPoint {
        InterestPoint { x, y, score: 1.0 }
    }

    #[test]
    fn interior_patch_is_raw_block() {
        let img = GrayImage::from_fn(100, 100, |x, y| ((x * 7 + y * 13) % 256) as f64);
        let patches = mesh_patches(&img, "a", &[pt(50, 50)]);
        let p = &patches[0];
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                assert_eq!(p.get(x, y), img.get(30 + x, 30 + y));
            }
        }
        assert_eq!(p.get(20, 20), img.get(50, 50));
    }

    #[test]
    fn corner_patch_replicates_border() {
        let img = GrayImage::from_fn(6, 6, |x, y| (10 * y + x) as f64);
        let p = &mesh_patches(&img, "a", &[pt(0, 0)])[0];
        // the whole top-left quadrant clamps onto pixel (0, 0)
        for y in 0..20 {
            for x in 0..20 {
                assert_eq!(p.get(x, y), 0.0);
            }
        }
        // right of the center, rows above the image replicate row 0
        assert_eq!(p.get(23, 5), 3.0);
        // far beyond the image clamps to the last pixel
        assert_eq!(p.get(39, 39), 55.0);
        assert!(mesh_patches(&img, "a", &[]).is_empty());
    }

    #[test]
    fn constant_patch_descriptor_is_zero() {
        let d = builtin_descriptor(&patch_from(|_, _| 77.0), 128).unwrap();
        assert_eq!(d.dim(), 128);
        assert!(d.vector.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn offset_invariance() {
        let base = |x: usize, y: usize| ((x * 31 + y * 17) % 150) as f64 + 20.0;
        for dim in BUILTIN_DIMS {
            let a = builtin_descriptor(&patch_from(base), dim).unwrap();
            let b = builtin_descriptor(&patch_from(|x, y| base(x, y) + 30.0), dim).unwrap();
            assert_eq!(a.vector, b.vector, "dim {dim}");
        }
    }

    #[test]
    fn vertical_step_histogram_is_horizontal() {
        let d = builtin_descriptor(&patch_from(|x, _| if x < 20 { 10.0 } else { 210.0 }), 128).unwrap();
        let hist = &d.vector[INTENSITY_LEN..BLOCK_LEN];
        let total: f64 = hist.iter().sum();
        assert!(total > 0.0);
        assert!((hist[0] + hist[8] - total).abs() < 1e-12);

        let d = builtin_descriptor(&patch_from(|x, _| if x < 20 { 210.0 } else { 10.0 }), 128).unwrap();
        assert!((d.vector[INTENSITY_LEN + 8] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn block_layout_per_dim() {
        let p = patch_from(|x, y| ((x * x + 3 * y) % 200) as f64);
        let d128 = builtin_descriptor(&p, 128).unwrap().vector;
        let d1000 = builtin_descriptor(&p, 1000).unwrap().vector;
        let d64 = builtin_descriptor(&p, 64).unwrap().vector;
        assert_eq!(&d64[..], &d128[..64]);
        assert!(d128[BLOCK_LEN..].iter().all(|&v| v == 0.0));
        for k in 0..12 {
            assert_eq!(&d1000[k * BLOCK_LEN..(k + 1) * BLOCK_LEN], &d128[..BLOCK_LEN]);
        }
        assert!(d1000[960..].iter().all(|&v| v == 0.0));
        // unit variance over 64 cells plus a unit histogram
        let norm = d128.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 65f64.sqrt()).abs() < 1e-5);
        assert!(matches!(builtin_descriptor(&p, 100), Err(DescriptorError::UnsupportedDim(100))));
    }

    fn sample_file(dim: usize, n: u32) -> FeatureFile {
        let records = (0..n)
            .map(|i| FeatureRecord {
                image_id: "c0/a.pgm".into(),
                point_index: i,
                point: (i as f64, 2.0 * i as f64),
                origin: Origin::Original,
                vector: (0..dim).map(|k| (k as f32 * 0.25 + i as f32) as f64).collect(),
            })
            .collect();
        FeatureFile { dim, records }
    }

    #[test]
    fn import_matches_expected_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfv");
        let file = sample_file(4, 2);
        write_pfv1(&path, &file).unwrap();

        let keys = vec![("c0/a.pgm".to_string(), 1), ("c0/a.pgm".to_string(), 0)];
        let got = import_features(&path, &keys, 4).unwrap();
        assert_eq!(got[0], file.records[1]);
        assert_eq!(got[1], file.records[0]);

        let keys = vec![("c0/a.pgm".to_string(), 5)];
        match import_features(&path, &keys, 4) {
            Err(DescriptorError::MissingKey { image_id, point_index }) => {
                assert_eq!((image_id.as_str(), point_index), ("c0/a.pgm", 5));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            import_features(&path, &keys, 1000),
            Err(DescriptorError::DimensionMismatch { expected: 1000, found: 4 })
        ));
    }

    #[test]
    fn import_rejects_duplicates() {
        let mut file = sample_file(3, 2);
        file.records[1].point_index = 0;
        let keys = vec![("c0/a.pgm".to_string(), 0)];
        assert!(matches!(
            match_records(file, &keys, 3),
            Err(DescriptorError::DuplicateKey { point_index: 0, .. })
        ));
    }

    #[test]
    fn descriptor_source_validation() {
        assert!(DescriptorSource::default().validate().is_ok());
        assert!(DescriptorSource::Builtin { dim: 80 }.validate().is_err());
        assert!(matches!(
            DescriptorSource::Imported { dim: 1000, import_path: None }.validate(),
            Err(DescriptorError::MissingImportPath)
        ));
    }
}
