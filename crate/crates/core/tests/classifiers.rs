mod common;

use pairwise_core::classifiers::{
    decode_model, encode_model, predict_image, predict_rows, train_forest, Aggregation, ClassifierConfig, ForestConfig,
    KdTree, KnnConfig, LinearSvmConfig, TrainingRows,
};
use pairwise_core::pairing::JointFeatureMap;
use pairwise_core::patch_descriptor::{FeatureRecord, Origin};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let centers: Vec<Vec<f64>> = (0..n_classes).map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            vectors.push(center.iter().map(|m| m + noise.sample(&mut rng)).collect());
            labels.push(c);
        }
    }
    (vectors, labels)
}

fn accuracy(cfg: &ClassifierConfig, rows: &TrainingRows, vectors: &[Vec<f64>], labels: &[usize]) -> f64 {
    let model = cfg.train(rows).unwrap();
    let preds = predict_rows(&model, vectors.iter().map(Vec::as_slice)).unwrap();
    preds.iter().zip(labels).filter(|(p, &l)| p.label == l).count() as f64 / labels.len() as f64
}

fn lattice_points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|dim| {
        (
            proptest::collection::vec(proptest::collection::vec((-4i8..4).prop_map(f64::from), dim), 1..80),
            proptest::collection::vec((-5i8..5).prop_map(|v| f64::from(v) * 0.9), dim),
        )
    })
}

proptest! {
    #[test]
    fn kd_tree_agrees_with_brute_force((points, query) in lattice_points(), k in 1usize..12) {
        let tree = KdTree::build(points.clone());
        let got: Vec<(f64, usize)> = tree.nearest(&query, k).iter().map(|n| (n.dist2, n.index)).collect();
        prop_assert_eq!(got, common::brute_knn(&points, &query, k));
    }

    #[test]
    fn forest_ignores_training_row_order(seed in any::<u64>()) {
        let (vectors, labels) = blobs(3, 12, 4, 1.5, seed);
        let cfg = ForestConfig { trees: 15, seed: 3, ..Default::default() };
        let model = train_forest(&TrainingRows::new(vectors.clone(), labels.clone(), 3).unwrap(), &cfg).unwrap();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled = TrainingRows::new(
            order.iter().map(|&i| vectors[i].clone()).collect(),
            order.iter().map(|&i| labels[i]).collect(),
            3,
        ).unwrap();
        let other = train_forest(&shuffled, &cfg).unwrap();
        prop_assert_eq!(model.oob_accuracy(), other.oob_accuracy());
        let (probe, _) = blobs(3, 5, 4, 3.0, seed.wrapping_add(9));
        let a = predict_rows(&pairwise_core::classifiers::Model::RandomForest(model), probe.iter().map(Vec::as_slice)).unwrap();
        let b = predict_rows(&pairwise_core::classifiers::Model::RandomForest(other), probe.iter().map(Vec::as_slice)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn image_label_ignores_row_order(seed in any::<u64>(), which in 0usize..3, rule in prop_oneof![Just(Aggregation::MajorityVote), Just(Aggregation::MeanScore)]) {
        let (vectors, labels) = blobs(3, 10, 3, 2.5, seed);
        let cfg = match which {
            0 => ClassifierConfig::Knn(KnnConfig { k: 5 }),
            1 => ClassifierConfig::LinearSvm(LinearSvmConfig { max_epochs: 20, ..Default::default() }),
            _ => ClassifierConfig::RandomForest(ForestConfig { trees: 9, ..Default::default() }),
        };
        let model = cfg.train(&TrainingRows::new(vectors, labels, 3).unwrap()).unwrap();
        let (probe, _) = blobs(3, 4, 3, 4.0, seed.wrapping_add(1));
        let rows: Vec<FeatureRecord> = probe
            .into_iter()
            .enumerate()
            .map(|(i, vector)| FeatureRecord { image_id: "x/y".into(), point_index: i as u32, point: (0.0, 0.0), origin: Origin::Original, vector })
            .collect();
        let map = JointFeatureMap { image_id: "x/y".into(), dim: 3, rows: rows.clone() };
        let mut shuffled = rows;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let other = JointFeatureMap { image_id: "x/y".into(), dim: 3, rows: shuffled };
        prop_assert_eq!(predict_image(&model, &map, rule).unwrap(), predict_image(&model, &other, rule).unwrap());
    }
}

#[test]
fn one_neighbor_recovers_every_training_row() {
    for dim in [2, 8, 40] {
        let (vectors, labels) = blobs(4, 15, dim, 3.0, dim as u64);
        let rows = TrainingRows::new(vectors.clone(), labels.clone(), 4).unwrap();
        let cfg = ClassifierConfig::Knn(KnnConfig { k: 1 });
        assert_eq!(accuracy(&cfg, &rows, &vectors, &labels), 1.0, "dim {dim}");
    }
}

#[test]
fn linear_svm_separates_well_spaced_blobs() {
    let (vectors, labels) = blobs(3, 30, 5, 0.3, 11);
    let rows = TrainingRows::new(vectors.clone(), labels.clone(), 3).unwrap();
    let cfg = ClassifierConfig::LinearSvm(LinearSvmConfig::default());
    assert_eq!(accuracy(&cfg, &rows, &vectors, &labels), 1.0);
}

#[test]
fn every_classifier_beats_chance_on_noisy_blobs() {
    let (train, train_labels) = blobs(4, 40, 6, 2.0, 5);
    let rows = TrainingRows::new(train, train_labels, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let (test, test_labels): (Vec<Vec<f64>>, Vec<usize>) = rows
        .vectors
        .iter()
        .zip(&rows.labels)
        .map(|(v, &l)| (v.iter().map(|x| x + noise.sample(&mut rng) * 0.5).collect(), l))
        .unzip();
    for cfg in ClassifierConfig::defaults() {
        let acc = accuracy(&cfg, &rows, &test, &test_labels);
        assert!(acc > 0.5, "{} accuracy {acc}", cfg.name());
    }
}

#[test]
fn models_survive_a_serialization_round_trip() {
    let (vectors, labels) = blobs(3, 20, 4, 1.0, 2);
    let rows = TrainingRows::new(vectors.clone(), labels, 3).unwrap();
    for cfg in ClassifierConfig::defaults() {
        let model = cfg.train(&rows).unwrap();
        let bytes = encode_model(&cfg, &model).unwrap();
        let (cfg2, model2) = decode_model(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        let a = predict_rows(&model, vectors.iter().map(Vec::as_slice)).unwrap();
        let b = predict_rows(&model2, vectors.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(a, b, "{}", cfg.name());
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn wrong_dimension_and_single_class_are_rejected() {
    let (vectors, labels) = blobs(2, 5, 3, 1.0, 0);
    let rows = TrainingRows::new(vectors, labels, 2).unwrap();
    let model = ClassifierConfig::Knn(KnnConfig { k: 3 }).train(&rows).unwrap();
    assert!(predict_rows(&model, [&[1.0, 2.0][..]]).is_err());
    assert!(TrainingRows::new(vec![vec![1.0]], vec![2], 2).is_err());
    let single = TrainingRows::new(vec![vec![0.0], vec![1.0]], vec![0, 0], 2).unwrap();
    assert!(ClassifierConfig::LinearSvm(LinearSvmConfig::default()).train(&single).is_err());
}
