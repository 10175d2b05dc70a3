//! Edge-midpoint feature synthesis and joint feature maps.
//!
//! Each Delaunay edge between two interest points contributes one paired
//! row: the midpoint of its endpoints with the element-wise mean of their
//! descriptors. A joint map stacks the original rows followed by the paired
//! rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patch_descriptor::{FeatureRecord, Origin};
use crate::pfv::FeatureFile;
use crate::triangulation::{delaunay, Point, Triangulation, TriangulationError};

#[derive(Debug, Error, PartialEq)]
pub enum PairingError {
    #[error("cannot pair vectors of length {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot pair features from different images ({0:?} and {1:?})")]
    CrossImage(String, String),
    #[error("{records} records supplied for a graph over {points} points")]
    CountMismatch { records: usize, points: usize },
    #[error("joint map for {0:?} would be empty")]
    EmptyMap(String),
}

/// How a joint feature map is assembled from an image's original features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Originals followed by one paired row per edge.
    Paired,
    /// Originals only.
    NonPaired,
    /// A single row concatenating the originals, zero-padded to a fixed slot count.
    Horizontal,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Paired, FeatureMode::NonPaired, FeatureMode::Horizontal];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Paired => "paired",
            FeatureMode::NonPaired => "non_paired",
            FeatureMode::Horizontal => "horizontal",
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected paired, non_paired or horizontal)"))
    }
}

/// Which edges pair an image's points.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGraph {
    pub points: Vec<Point>,
    /// `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Set when triangulation failed and the path-graph fallback (or no edges) was used.
    pub degenerate: Option<TriangulationError>,
}

impl PairGraph {
    pub fn from_triangulation(t: &Triangulation) -> Self {
        Self {
            points: t.points.clone(),
            edges: t.edges.clone(),
            degenerate: None,
        }
    }

    /// Delaunay edges of `points`. When triangulation is impossible the
    /// points are chained along their dominant axis if `fallback` is set,
    /// otherwise the graph has no edges.
    pub fn build(points: &[Point], fallback: bool) -> Self {
        match delaunay(points) {
            Ok(t) => Self::from_triangulation(&t),
            Err(err) => Self {
                points: points.to_vec(),
                edges: if fallback { path_edges(points) } else { Vec::new() },
                degenerate: Some(err),
            },
        }
    }
}

/// Path through the points sorted along the axis of larger spread.
fn path_edges(points: &[Point]) -> Vec<(usize, usize)> {
    if points.len() < 2 {
        return Vec::new();
    }
    let spread = |f: fn(&Point) -> f64| {
        let (lo, hi) = points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let by_x = spread(|p| p.0) >= spread(|p| p.1);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a], points[b]);
        let (ka, kb) = if by_x { ((pa.0, pa.1), (pb.0, pb.1)) } else { ((pa.1, pa.0), (pb.1, pb.0)) };
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
    });
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    edges.sort_unstable();
    edges
}

pub fn midpoint(p1: Point, p2: Point) -> Point {
    ((p1.0 + p2.0) / 2.0, (p1.1 + p2.1) / 2.0)
}

/// Element-wise mean of two descriptors from the same image, placed at the midpoint.
pub fn pair_features(f1: &FeatureRecord, f2: &FeatureRecord) -> Result<FeatureRecord, PairingError> {
    if f1.vector.len() != f2.vector.len() {
        return Err(PairingError::DimensionMismatch(f1.vector.len(), f2.vector.len()));
    }
    if f1.image_id != f2.image_id {
        return Err(PairingError::CrossImage(f1.image_id.clone(), f2.image_id.clone()));
    }
    Ok(FeatureRecord {
        image_id: f1.image_id.clone(),
        point_index: 0,
        point: midpoint(f1.point, f2.point),
        origin: Origin::Paired,
        vector: f1.vector.iter().zip(&f2.vector).map(|(a, b)| (a + b) / 2.0).collect(),
    })
}

/// Per-image stack of feature rows fed to the classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct JointFeatureMap {
    pub image_id: String,
    pub dim: usize,
    pub rows: Vec<FeatureRecord>,
}

impl JointFeatureMap {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.iter().map(|r| r.vector.as_slice())
    }
}

/// Stacks one image's original features according to `mode`.
///
/// `records` must be the originals in the same order as `graph.points`.
/// Horizontal mode concatenates the first `slots` originals into one row of
/// length `slots * dim`, zero-padding missing slots.
pub fn build_joint_map(
    records: &[FeatureRecord],
    graph: &PairGraph,
    mode: FeatureMode,
    slots: usize,
) -> Result<JointFeatureMap, PairingError> {
    if records.len() != graph.points.len() {
        return Err(PairingError::CountMismatch {
            records: records.len(),
            points: graph.points.len(),
        });
    }
    let Some(first) = records.first() else {
        return Err(PairingError::EmptyMap(String::new()));
    };
    let image_id = first.image_id.clone();
    let dim = first.vector.len();
    if let Some(r) = records.iter().find(|r| r.vector.len() != dim) {
        return Err(PairingError::DimensionMismatch(dim, r.vector.len()));
    }

    match mode {
        FeatureMode::NonPaired => Ok(JointFeatureMap {
            image_id,
            dim,
            rows: records.to_vec(),
        }),
        FeatureMode::Paired => {
            let mut rows = records.to_vec();
            rows.reserve(graph.edges.len());
            for (k, &(i, j)) in graph.edges.iter().enumerate() {
                let mut paired = pair_features(&records[i], &records[j])?;
                paired.point_index = k as u32;
                rows.push(paired);
            }
            Ok(JointFeatureMap { image_id, dim, rows })
        }
        FeatureMode::Horizontal => {
            let mut vector = Vec::with_capacity(slots * dim);
            for r in records.iter().take(slots) {
                vector.extend_from_slice(&r.vector);
            }
            vector.resize(slots * dim, 0.0);
            let n = records.len() as f64;
            let centroid = records
                .iter()
                .fold((0.0, 0.0), |acc, r| (acc.0 + r.point.0 / n, acc.1 + r.point.1 / n));
            Ok(JointFeatureMap {
                image_id: image_id.clone(),
                dim: slots * dim,
                rows: vec![FeatureRecord {
                    image_id,
                    point_index: 0,
                    point: centroid,
                    origin: Origin::Original,
                    vector,
                }],
            })
        }
    }
}

/// Packs joint maps into a PFV2 feature file. All maps must share one dimension.
pub fn joint_maps_to_file(maps: &[JointFeatureMap]) -> Result<FeatureFile, PairingError> {
    let dim = maps.first().map_or(0, |m| m.dim);
    if let Some(m) = maps.iter().find(|m| m.dim != dim) {
        return Err(PairingError::DimensionMismatch(dim, m.dim));
    }
    Ok(FeatureFile {
        dim,
        records: maps.iter().flat_map(|m| m.rows.iter().cloned()).collect(),
    })
}
