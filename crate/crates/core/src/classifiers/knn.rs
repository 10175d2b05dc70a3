use serde::{Deserialize, Serialize};

use super::kdtree::{squared_distance, KdTree, Neighbor};
use super::{ClassifierError, RowPrediction, Standardizer, TrainingRows};

/// Above this dimension neighbors are found by exhaustive scan; results are identical.
pub const KDTREE_MAX_DIM: usize = 32;

/// Inverse-distance-weighted k-nearest-neighbors settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 21 }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.k == 0 {
            return Err(ClassifierError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    standardizer: Standardizer,
    labels: Vec<usize>,
    index: KdTree,
    use_tree: bool,
}

pub fn train_knn(rows: &TrainingRows, cfg: &KnnConfig) -> Result<KnnModel, ClassifierError> {
    rows.validate()?;
    cfg.validate()?;
    let standardizer = Standardizer::fit(&rows.vectors);
    let scaled: Vec<Vec<f64>> = rows.vectors.iter().map(|v| standardizer.apply(v)).collect();
    Ok(KnnModel {
        k: cfg.k,
        n_classes: rows.n_classes,
        standardizer,
        labels: rows.labels.clone(),
        use_tree: rows.dim() <= KDTREE_MAX_DIM,
        index: KdTree::build(scaled),
    })
}

impl KnnModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// The `k` nearest standardized training rows, nearest first (ties by index).
    pub fn neighbors(&self, row: &[f64]) -> Vec<Neighbor> {
        let q = self.standardizer.apply(row);
        if self.use_tree {
            return self.index.nearest(&q, self.k);
        }
        let mut all: Vec<Neighbor> = self
            .index
            .points()
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor { dist2: squared_distance(&q, p), index })
            .collect();
        let k = self.k.min(all.len());
        if k < all.len() {
            all.select_nth_unstable(k);
            all.truncate(k);
        }
        all.sort_unstable();
        all
    }

    pub(crate) fn predict_one(&self, row: &[f64]) -> RowPrediction {
        let neighbors = self.neighbors(row);
        let mut weights = vec![0.0; self.n_classes];
        let exact: Vec<&Neighbor> = neighbors.iter().filter(|n| n.dist2 == 0.0).collect();
        if exact.is_empty() {
            for n in &neighbors {
                weights[self.labels[n.index]] += 1.0 / n.dist2.sqrt();
            }
        } else {
            // zero distance carries infinite weight; only exact matches vote
            for n in exact {
                weights[self.labels[n.index]] += 1.0;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        RowPrediction::from_scores(weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{predict_rows, ClassifierConfig};

    fn rows(v: Vec<Vec<f64>>, l: Vec<usize>, k: usize) -> TrainingRows {
        TrainingRows::new(v, l, k).unwrap()
    }

    #[test]
    fn single_row_always_wins() {
        let m = train_knn(&rows(vec![vec![1.0, 2.0]], vec![1], 3), &KnnConfig::default()).unwrap();
        assert_eq!(m.predict_one(&[100.0, -4.0]).label, 1);
    }

    #[test]
    fn exact_match_dominates() {
        let vectors = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0]];
        let m = train_knn(&rows(vectors, vec![0, 0, 0, 1], 2), &KnnConfig { k: 4 }).unwrap();
        let p = m.predict_one(&[5.0]);
        assert_eq!(p.label, 1);
        assert_eq!(p.scores, vec![0.0, 1.0]);
    }

    #[test]
    fn inverse_distance_vote() {
        // standardization is affine per dimension; pick points whose scaled
        // distances to the query keep the ratios 1 : 2 : 4
        let vectors = vec![vec![1.0], vec![2.0], vec![4.0], vec![-7.0]];
        let m = train_knn(&rows(vectors, vec![0, 1, 1, 1], 2), &KnnConfig { k: 3 }).unwrap();
        let p = m.predict_one(&[0.0]);
        // weight(A) = 1, weight(B) = 1/2 + 1/4
        assert_eq!(p.label, 0);
        assert!((p.scores[0] - 1.0 / 1.75).abs() < 1e-12);
    }

    #[test]
    fn separable_toy_resubstitution() {
        let vectors = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0], vec![5.0, 6.0]];
        let labels = vec![0, 0, 1, 1];
        let cfg = ClassifierConfig::Knn(KnnConfig { k: 3 });
        let model = cfg.train(&rows(vectors.clone(), labels.clone(), 2)).unwrap();
        let preds = predict_rows(&model, vectors.iter().map(|v| v.as_slice())).unwrap();
        assert_eq!(preds.iter().map(|p| p.label).collect::<Vec<_>>(), labels);
        assert!(predict_rows(&model, std::iter::empty()).unwrap().is_empty());
        assert!(matches!(
            predict_rows(&model, [[1.0].as_slice()]),
            Err(ClassifierError::DimensionMismatch { expected: 2, found: 1 })
        ));
        let dup = predict_rows(&model, [[2.0, 2.0].as_slice(), [2.0, 2.0].as_slice()]).unwrap();
        assert_eq!(dup[0], dup[1]);
    }

    #[test]
    fn tree_and_scan_paths_agree() {
        let vectors: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i * 3 % 11) as f64]).collect();
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let tr = rows(vectors, labels, 3);
        let tree = train_knn(&tr, &KnnConfig { k: 5 }).unwrap();
        let mut scan = tree.clone();
        scan.use_tree = false;
        for q in [[0.5, 0.5], [3.0, 7.0], [6.0, 10.0]] {
            assert_eq!(tree.neighbors(&q), scan.neighbors(&q));
            assert_eq!(tree.predict_one(&q), scan.predict_one(&q));
        }
    }
}
