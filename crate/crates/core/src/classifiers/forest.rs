//! Random forest of CART trees with Gini splits.
//!
//! Rows are put in a canonical order (label, then vector lexicographically)
//! before any sampling, and tree `i` draws from its own ChaCha stream keyed
//! by the seed. The fitted forest therefore depends on the seed and the row
//! multiset, not on the order rows were supplied in.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, RowPrediction, TrainingRows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    /// Candidate features per split; `None` means `floor(sqrt(D))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 200,
            max_depth: 21,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.trees == 0 {
            return Err(ClassifierError::InvalidConfig("trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(ClassifierError::InvalidConfig("max_depth must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(ClassifierError::InvalidConfig("features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    fn mtry(&self, dim: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
            .clamp(1, dim.max(1))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Node {
    Leaf { distribution: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> &[f64] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { distribution } => return distribution,
                Node::Split { feature, threshold, left, right } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestModel {
    dim: usize,
    n_classes: usize,
    trees: Vec<DecisionTree>,
    oob_accuracy: Option<f64>,
}

impl ForestModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Accuracy of out-of-bag votes over rows left out by at least one tree.
    pub fn oob_accuracy(&self) -> Option<f64> {
        self.oob_accuracy
    }

    fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            acc.iter_mut().zip(t.predict(row)).for_each(|(a, p)| *a += p);
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub(crate) fn predict_one(&self, row: &[f64]) -> RowPrediction {
        RowPrediction::from_scores(self.distribution(row))
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub fn train_forest(rows: &TrainingRows, cfg: &ForestConfig) -> Result<ForestModel, ClassifierError> {
    rows.validate()?;
    cfg.validate()?;

    let mut canonical: Vec<usize> = (0..rows.len()).collect();
    canonical.sort_by(|&a, &b| {
        rows.labels[a]
            .cmp(&rows.labels[b])
            .then_with(|| lexicographic(&rows.vectors[a], &rows.vectors[b]))
    });
    let x: Vec<&[f64]> = canonical.iter().map(|&i| rows.vectors[i].as_slice()).collect();
    let y: Vec<usize> = canonical.iter().map(|&i| rows.labels[i]).collect();
    let data = Data {
        x: &x,
        y: &y,
        n_classes: rows.n_classes,
        dim: rows.dim(),
        mtry: cfg.mtry(rows.dim()),
        max_depth: cfg.max_depth,
    };

    let fitted: Vec<(DecisionTree, Vec<bool>)> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let n = y.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            sample.iter().for_each(|&i| in_bag[i] = true);
            (data.grow(sample, &mut rng), in_bag)
        })
        .collect();

    // out-of-bag votes
    let mut oob_hits = 0usize;
    let mut oob_rows = 0usize;
    for (i, row) in x.iter().enumerate() {
        let mut acc = vec![0.0; rows.n_classes];
        let mut voters = 0;
        for (tree, in_bag) in &fitted {
            if !in_bag[i] {
                acc.iter_mut().zip(tree.predict(row)).for_each(|(a, p)| *a += p);
                voters += 1;
            }
        }
        if voters > 0 {
            oob_rows += 1;
            if super::argmax(&acc) == y[i] {
                oob_hits += 1;
            }
        }
    }

    Ok(ForestModel {
        dim: rows.dim(),
        n_classes: rows.n_classes,
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy: (oob_rows > 0).then(|| oob_hits as f64 / oob_rows as f64),
    })
}

struct Data<'a> {
    x: &'a [&'a [f64]],
    y: &'a [usize],
    n_classes: usize,
    dim: usize,
    mtry: usize,
    max_depth: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl Data<'_> {
    fn grow(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        let mut nodes = Vec::new();
        self.grow_node(sample, 0, rng, &mut nodes);
        DecisionTree { nodes }
    }

    fn grow_node(&self, mut idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let mut counts = vec![0usize; self.n_classes];
        idx.iter().for_each(|&i| counts[self.y[i]] += 1);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let n = idx.len() as f64;
        let leaf = |counts: &[usize]| {
            Node::Leaf {
                distribution: counts.iter().map(|&c| c as f64 / n).collect(),
            }
        };
        if pure || idx.len() < 2 || depth >= self.max_depth {
            nodes.push(leaf(&counts));
            return id;
        }
        let Some(split) = self.best_split(&mut idx, &counts, rng) else {
            nodes.push(leaf(&counts));
            return id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        nodes.push(leaf(&counts));
        let left = self.grow_node(left_idx, depth + 1, rng, nodes);
        let right = self.grow_node(right_idx, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Examines features in random order until `mtry` non-constant ones have
    /// been scored; returns the lowest weighted Gini split among them.
    fn best_split(&self, idx: &mut [usize], parent: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let mut features: Vec<usize> = (0..self.dim).collect();
        let mut best: Option<BestSplit> = None;
        let mut scored = 0;
        let n = idx.len();
        for j in 0..self.dim {
            if scored == self.mtry {
                break;
            }
            let pick = rng.random_range(j..self.dim);
            features.swap(j, pick);
            let f = features[j];

            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let lo = self.x[idx[0]][f];
            let hi = self.x[idx[n - 1]][f];
            if lo == hi {
                continue;
            }
            scored += 1;

            let mut left = vec![0usize; self.n_classes];
            let mut right = parent.to_vec();
            for k in 0..n - 1 {
                let c = self.y[idx[k]];
                left[c] += 1;
                right[c] -= 1;
                let (v, next) = (self.x[idx[k]][f], self.x[idx[k + 1]][f]);
                if v == next {
                    continue;
                }
                let (nl, nr) = (k + 1, n - k - 1);
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(BestSplit { feature: f, threshold, impurity });
                }
            }
        }
        best
    }
}
