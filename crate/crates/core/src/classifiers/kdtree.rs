//! Exact k-nearest-neighbor search over a static point set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

const LEAF_SIZE: usize = 8;

/// A neighbor of a query: squared Euclidean distance and index into the indexed rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Squared distance accumulated in dimension order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Median-split kd-tree. Neighbors are ordered by `(distance, index)`, so
/// results match a brute-force scan exactly, ties included.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build_node(&points, &mut order, 0, n, &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The `k` nearest rows to `query`, nearest first.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn search(&self, node: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let cand = Neighbor {
                        dist2: squared_distance(query, &self.points[index]),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            KdNode::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                // a plane distance equal to the worst kept distance may still hide a lower-index tie
                let worst = heap.peek().map_or(f64::INFINITY, |n| n.dist2);
                if heap.len() < k || diff * diff <= worst {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

fn build_node(points: &[Vec<f64>], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<KdNode>) -> usize {
    let id = nodes.len();
    let slice = &mut order[start..end];
    if slice.len() <= LEAF_SIZE {
        nodes.push(KdNode::Leaf { start, end });
        return id;
    }
    let dims = points[slice[0]].len();
    let (dim, spread) = (0..dims)
        .map(|d| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][d]), hi.max(points[i][d]))
            });
            (d, hi - lo)
        })
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if spread <= 0.0 {
        nodes.push(KdNode::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
    let value = points[slice[mid]][dim];
    // left holds coordinates <= value, right holds >= value
    nodes.push(KdNode::Leaf { start, end });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = KdNode::Split { dim, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    fn check(points: Vec<Vec<f64>>, queries: &[Vec<f64>], k: usize) {
        let tree = KdTree::build(points.clone());
        for q in queries {
            let got: Vec<(f64, usize)> = tree.nearest(q, k).iter().map(|n| (n.dist2, n.index)).collect();
            assert_eq!(got, brute(&points, q, k));
        }
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dims in [1, 2, 3, 8, 16] {
            for _ in 0..20 {
                let n = rng.random_range(1..200);
                let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dims).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
                let qs: Vec<Vec<f64>> = (0..10).map(|_| (0..dims).map(|_| rng.random_range(-6.0..6.0)).collect()).collect();
                check(pts, &qs, rng.random_range(1..25));
            }
        }
    }

    #[test]
    fn matches_brute_force_with_ties() {
        // integer lattice with duplicates produces many equal distances
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.random_range(0..4) as f64, rng.random_range(0..4) as f64]).collect();
        let qs: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0..4) as f64, rng.random_range(0..4) as f64]).collect();
        for k in [1, 5, 21, 200] {
            check(pts.clone(), &qs, k);
        }
    }

    #[test]
    fn empty_and_oversized_k() {
        assert!(KdTree::build(vec![]).nearest(&[0.0], 3).is_empty());
        let tree = KdTree::build(vec![vec![1.0], vec![2.0]]);
        assert_eq!(tree.nearest(&[0.0], 10).len(), 2);
    }
}
