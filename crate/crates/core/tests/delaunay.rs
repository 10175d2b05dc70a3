mod common;

use std::collections::BTreeSet;

use pairwise_core::triangulation::{delaunay, Point, TriangulationError};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distinct(points: Vec<Point>) -> Vec<Point> {
    let mut seen = BTreeSet::new();
    points.into_iter().filter(|p| seen.insert((p.0.to_bits(), p.1.to_bits()))).collect()
}

fn not_collinear(points: &[Point]) -> bool {
    points.len() >= 3 && points.iter().any(|&c| common::orient(points[0], points[1], c) != 0.0)
}

fn check(points: &[Point]) -> Result<(), TestCaseError> {
    let t = delaunay(points).unwrap();
    let n = points.len();
    let h = common::hull_boundary_count(points);
    prop_assert_eq!(t.triangles.len(), 2 * n - 2 - h);
    prop_assert_eq!(t.edges.len(), 3 * n - 3 - h);
    for tri in &t.triangles {
        let [a, b, c] = tri.map(|i| points[i]);
        prop_assert!(common::orient(a, b, c) > 0.0);
        for (i, &d) in points.iter().enumerate() {
            if tri.contains(&i) {
                continue;
            }
            let (det, scale) = common::incircle(a, b, c, d);
            prop_assert!(det <= 1e-9 * scale, "point {} inside circumcircle of {:?}", i, tri);
        }
    }
    let mut used = vec![false; n];
    t.triangles.iter().flatten().for_each(|&i| used[i] = true);
    prop_assert!(used.iter().all(|&u| u));
    Ok(())
}

proptest! {
    #[test]
    fn random_points_are_delaunay(raw in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0), 3..60)) {
        let points = distinct(raw);
        prop_assume!(not_collinear(&points));
        check(&points)?;
    }

    #[test]
    fn lattice_points_with_cocircular_quads_are_delaunay(raw in proptest::collection::vec((0i32..8, 0i32..8), 3..40)) {
        let points = distinct(raw.into_iter().map(|(x, y)| (f64::from(x) * 10.0, f64::from(y) * 10.0)).collect());
        prop_assume!(not_collinear(&points));
        check(&points)?;
    }

    #[test]
    fn edge_set_ignores_input_order(
        raw in proptest::collection::vec((0.0f64..500.0, 0.0f64..500.0), 3..40),
        seed in any::<u64>(),
    ) {
        let points = distinct(raw);
        prop_assume!(not_collinear(&points));
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Point> = order.iter().map(|&i| points[i]).collect();
        let as_points = |pts: &[Point], edges: &[(usize, usize)]| -> BTreeSet<[(u64, u64); 2]> {
            edges
                .iter()
                .map(|&(i, j)| {
                    let mut e = [pts[i], pts[j]].map(|p| (p.0.to_bits(), p.1.to_bits()));
                    e.sort();
                    e
                })
                .collect()
        };
        let a = delaunay(&points).unwrap();
        let b = delaunay(&shuffled).unwrap();
        prop_assert_eq!(as_points(&points, &a.edges), as_points(&shuffled, &b.edges));
    }
}

#[test]
fn square_gives_two_triangles_and_five_edges() {
    let t = delaunay(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
    assert_eq!(t.triangles.len(), 2);
    assert_eq!(t.edges.len(), 5);
}

#[test]
fn degenerate_inputs_are_reported() {
    assert!(matches!(delaunay(&[(0.0, 0.0), (1.0, 1.0)]), Err(TriangulationError::TooFewPoints(2))));
    assert!(matches!(
        delaunay(&[(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]),
        Err(TriangulationError::TooFewPoints(2))
    ));
    let line: Vec<Point> = (0..6).map(|i| (f64::from(i), 2.0 * f64::from(i))).collect();
    assert!(matches!(delaunay(&line), Err(TriangulationError::Collinear(6))));
}

#[test]
fn duplicates_are_left_out_of_the_mesh() {
    let pts = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0), (4.0, 0.0), (3.0, 3.0)];
    let t = delaunay(&pts).unwrap();
    assert!(t.triangles.iter().flatten().all(|&i| i != 3));
    assert_eq!(t.triangles.len(), 2);
}

#[test]
fn dense_grid_is_fast_enough() {
    let points: Vec<Point> = (0..40).flat_map(|y| (0..25).map(move |x| (f64::from(x) * 3.0, f64::from(y) * 3.0))).collect();
    let start = std::time::Instant::now();
    let t = delaunay(&points).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let h = 2 * (40 + 25) - 4;
    assert_eq!(t.triangles.len(), 2 * 1000 - 2 - h);
}
