//! One-vs-rest linear SVM trained by stochastic subgradient descent on the
//! primal hinge-loss objective
//!
//! ```text
//! J(w) = lambda/2 |w|^2 + 1/n sum_i max(0, 1 - y_i <w, x_i>),   lambda = 1 / (C n)
//! ```
//!
//! with step size `1 / (lambda t)` and projection onto the ball of radius
//! `1 / sqrt(lambda)`. The bias is a constant input feature. After every
//! epoch the better of the epoch-averaged iterate and the last iterate is
//! scored against `J`; the best weights seen so far are kept, and training
//! stops once that score moves by less than `tolerance` between epochs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, RowPrediction, Standardizer, TrainingRows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSvmConfig {
    /// Regularization constant C.
    pub c: f64,
    /// Per-epoch objective change below which training stops.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
}

impl Default for LinearSvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-3,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl LinearSvmConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(ClassifierError::InvalidConfig("C must be positive and finite".into()));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(ClassifierError::InvalidConfig("tolerance must be positive and finite".into()));
        }
        if self.max_epochs == 0 {
            return Err(ClassifierError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One binary head: weights over the standardized features plus a trailing bias.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvmHead {
    pub weights: Vec<f64>,
    /// Best objective after each epoch, starting with the zero-weight objective.
    pub objective_history: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvmModel {
    standardizer: Standardizer,
    heads: Vec<SvmHead>,
}

pub fn train_linear_svm(rows: &TrainingRows, cfg: &LinearSvmConfig) -> Result<SvmModel, ClassifierError> {
    rows.validate()?;
    cfg.validate()?;
    if rows.distinct_labels() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let standardizer = Standardizer::fit(&rows.vectors);
    let augmented: Vec<Vec<f64>> = rows
        .vectors
        .iter()
        .map(|v| {
            let mut x = standardizer.apply(v);
            x.push(1.0);
            x
        })
        .collect();
    let heads = (0..rows.n_classes)
        .into_par_iter()
        .map(|class| {
            let targets: Vec<f64> = rows.labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            train_head(&augmented, &targets, cfg)
        })
        .collect();
    Ok(SvmModel { standardizer, heads })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(w: &[f64], x: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = x.iter().zip(y).map(|(xi, &yi)| (1.0 - yi * dot(w, xi)).max(0.0)).sum();
    0.5 * lambda * dot(w, w) + hinge / x.len() as f64
}

fn train_head(x: &[Vec<f64>], y: &[f64], cfg: &LinearSvmConfig) -> SvmHead {
    let n = x.len();
    let dim = x[0].len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let radius = 1.0 / lambda.sqrt();

    let mut w = vec![0.0; dim];
    let mut best = w.clone();
    let mut best_obj = objective(&w, x, y, lambda);
    let mut history = vec![best_obj];
    let mut prev_obj = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut avg = vec![0.0; dim];
    let mut t = 0u64;

    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        avg.iter_mut().for_each(|a| *a = 0.0);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * dot(&w, &x[i]);
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|wj| *wj *= shrink);
            if margin < 1.0 {
                w.iter_mut().zip(&x[i]).for_each(|(wj, xj)| *wj += eta * y[i] * xj);
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|wj| *wj *= s);
            }
            avg.iter_mut().zip(&w).for_each(|(a, wj)| *a += wj);
        }
        avg.iter_mut().for_each(|a| *a /= n as f64);

        let avg_obj = objective(&avg, x, y, lambda);
        let last_obj = objective(&w, x, y, lambda);
        let (cand, cand_obj) = if avg_obj <= last_obj { (&avg, avg_obj) } else { (&w, last_obj) };
        if cand_obj < best_obj {
            best.copy_from_slice(cand);
            best_obj = cand_obj;
        }
        history.push(best_obj);
        if (prev_obj - cand_obj).abs() < cfg.tolerance {
            break;
        }
        prev_obj = cand_obj;
    }
    SvmHead {
        weights: best,
        objective_history: history,
    }
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn n_classes(&self) -> usize {
        self.heads.len()
    }

    pub fn heads(&self) -> &[SvmHead] {
        &self.heads
    }

    /// Raw one-vs-rest decision values.
    pub fn decision_values(&self, row: &[f64]) -> Vec<f64> {
        let mut x = self.standardizer.apply(row);
        x.push(1.0);
        self.heads.iter().map(|h| dot(&h.weights, &x)).collect()
    }

    /// Label from the largest decision value; scores are its softmax.
    pub(crate) fn predict_one(&self, row: &[f64]) -> RowPrediction {
        let f = self.decision_values(row);
        let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = f.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        RowPrediction::from_scores(exp.into_iter().map(|e| e / total).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn fit(v: Vec<Vec<f64>>, l: Vec<usize>, k: usize) -> SvmModel {
        train_linear_svm(&TrainingRows::new(v, l, k).unwrap(), &LinearSvmConfig::default()).unwrap()
    }

    fn accuracy(m: &SvmModel, v: &[Vec<f64>], l: &[usize]) -> f64 {
        let hits = v.iter().zip(l).filter(|(x, &y)| m.predict_one(x).label == y).count();
        hits as f64 / l.len() as f64
    }

    #[test]
    fn separable_one_dimensional() {
        let m = fit(vec![vec![-1.0], vec![1.0]], vec![0, 1], 2);
        assert_eq!(m.predict_one(&[-1.0]).label, 0);
        assert_eq!(m.predict_one(&[1.0]).label, 1);
        let d_neg = m.decision_values(&[-1.0]);
        let d_pos = m.decision_values(&[1.0]);
        assert!(d_neg[1] < 0.0 && d_pos[1] > 0.0);
    }

    #[test]
    fn identical_rows_predict_constant() {
        let v = vec![vec![2.0, 2.0]; 6];
        let m = fit(v, vec![0, 1, 0, 1, 1, 0], 2);
        let a = m.predict_one(&[2.0, 2.0]).label;
        assert_eq!(m.predict_one(&[-9.0, 4.0]).label, a);
        for h in m.heads() {
            assert!(h.objective_history.iter().all(|o| o.is_finite() && *o <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn xor_is_not_linearly_separable() {
        let v = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let l = vec![0, 0, 1, 1];
        let m = fit(v.clone(), l.clone(), 2);
        assert!(accuracy(&m, &v, &l) <= 0.75);
    }

    #[test]
    fn overlapping_classes_train_past_a_flat_first_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut v = Vec::new();
        let mut l = Vec::new();
        for i in 0..400 {
            let c = i % 2;
            v.push((0..20).map(|d| noise.sample(&mut rng) + if d == 0 { c as f64 * 1.5 } else { 0.0 }).collect());
            l.push(c);
        }
        let m = fit(v.clone(), l.clone(), 2);
        assert!(m.heads().iter().all(|h| h.objective_history.len() > 2 && h.weights.iter().any(|w| *w != 0.0)));
        assert!(accuracy(&m, &v, &l) > 0.7);
    }

    #[test]
    fn single_class_is_rejected() {
        let rows = TrainingRows::new(vec![vec![1.0], vec![2.0]], vec![1, 1], 3).unwrap();
        assert!(matches!(
            train_linear_svm(&rows, &LinearSvmConfig::default()),
            Err(ClassifierError::SingleClass)
        ));
    }

    #[test]
    fn blobs_three_classes_objective_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let centers = [(0.0, 0.0), (12.0, 0.0), (0.0, 12.0)];
        let mut v = Vec::new();
        let mut l = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..40 {
                v.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng), rng.random_range(-1.0..1.0)]);
                l.push(c);
            }
        }
        let m = fit(v.clone(), l.clone(), 3);
        assert_eq!(accuracy(&m, &v, &l), 1.0);
        for h in m.heads() {
            assert!(h.objective_history.windows(2).all(|w| w[1] <= w[0]));
        }
        // deterministic given the seed
        let again = fit(v.clone(), l, 3);
        assert_eq!(m.decision_values(&v[7]), again.decision_values(&v[7]));
    }
}
