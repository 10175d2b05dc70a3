//! Incremental Bowyer-Watson Delaunay triangulation.
//!
//! The scaffold enclosing the first triangle is a single symbolic vertex at
//! infinity: every hull edge carries a "ghost" triangle joining it to that
//! vertex, whose circumcircle degenerates to the open half-plane beyond the
//! edge. Ghost triangles are dropped once all points are inserted, so the
//! result always covers the full convex hull.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Relative tolerance on the in-circle determinant; determinants within
/// `INCIRCLE_TOLERANCE` times the sum of absolute term magnitudes count as cocircular.
pub const INCIRCLE_TOLERANCE: f64 = 1e-9;
const COLLINEAR_TOLERANCE: f64 = 1e-12;

const GHOST: usize = usize::MAX;

pub type Point = (f64, f64);

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TriangulationError {
    #[error("need at least 3 distinct points, got {0}")]
    TooFewPoints(usize),
    #[error("all {0} distinct points are collinear")]
    Collinear(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation {
    /// Input points, in input order. Exact duplicates stay in the list but
    /// belong to no triangle.
    pub points: Vec<Point>,
    /// Counter-clockwise triangles as indices into `points`.
    pub triangles: Vec<[usize; 3]>,
    /// Undirected edges, lower index first, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl Triangulation {
    /// Assembles a triangulation from known triangles, deriving the edge list.
    pub fn from_triangles(points: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        let edges = edges_of(&triangles);
        Self { points, triangles, edges }
    }

    /// Writes the edge list as `i,j,x1,y1,x2,y2` CSV.
    pub fn write_edges_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("i,j,x1,y1,x2,y2\n");
        for &(i, j) in &self.edges {
            let (a, b) = (self.points[i], self.points[j]);
            let _ = writeln!(out, "{i},{j},{},{},{},{}", a.0, a.1, b.0, b.1);
        }
        fs::write(path, out)
    }
}

/// Each undirected edge of `t` exactly once, `(i, j)` with `i < j`, sorted.
pub fn unique_edges(t: &Triangulation) -> Vec<(usize, usize)> {
    edges_of(&t.triangles)
}

fn edges_of(triangles: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Sums terms with Neumaier compensation; returns the sum and the sum of magnitudes.
fn compensated_sum(terms: &[f64]) -> (f64, f64) {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut mag = 0.0f64;
    for &t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
        mag += t.abs();
    }
    (sum + comp, mag)
}

/// Twice the signed area of `abc`; positive when counter-clockwise.
/// Returns the determinant and the magnitude scale of its terms.
pub fn orient2d(a: Point, b: Point, c: Point) -> (f64, f64) {
    let (acx, acy) = (a.0 - c.0, a.1 - c.1);
    let (bcx, bcy) = (b.0 - c.0, b.1 - c.1);
    let p1 = acx * bcy;
    let e1 = acx.mul_add(bcy, -p1);
    let p2 = acy * bcx;
    let e2 = acy.mul_add(bcx, -p2);
    compensated_sum(&[p1, -p2, e1, -e2])
}

/// In-circle determinant for counter-clockwise `abc`: positive when `d` lies
/// strictly inside the circumcircle. Returns the determinant and the sum of
/// absolute values of its expanded terms.
pub fn incircle(a: Point, b: Point, c: Point, d: Point) -> (f64, f64) {
    let (adx, ady) = (a.0 - d.0, a.1 - d.1);
    let (bdx, bdy) = (b.0 - d.0, b.1 - d.1);
    let (cdx, cdy) = (c.0 - d.0, c.1 - d.1);
    let (ax2, ay2) = (adx * adx, ady * ady);
    let (bx2, by2) = (bdx * bdx, bdy * bdy);
    let (cx2, cy2) = (cdx * cdx, cdy * cdy);
    let terms = [
        ax2 * (bdx * cdy),
        ay2 * (bdx * cdy),
        -(ax2 * (cdx * bdy)),
        -(ay2 * (cdx * bdy)),
        bx2 * (cdx * ady),
        by2 * (cdx * ady),
        -(bx2 * (adx * cdy)),
        -(by2 * (adx * cdy)),
        cx2 * (adx * bdy),
        cy2 * (adx * bdy),
        -(cx2 * (bdx * ady)),
        -(cy2 * (bdx * ady)),
    ];
    compensated_sum(&terms)
}

/// True when `d` is inside the circumcircle of ccw `abc` by more than the tolerance.
pub fn in_circumcircle(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (det, scale) = incircle(a, b, c, d);
    det > INCIRCLE_TOLERANCE * scale
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let (det, scale) = orient2d(a, b, c);
    det.abs() <= COLLINEAR_TOLERANCE * scale
}

struct Mesh<'a> {
    pts: &'a [Point],
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    /// directed edge -> triangle holding it
    edges: HashMap<(usize, usize), usize>,
}

impl Mesh<'_> {
    fn add(&mut self, t: [usize; 3]) {
        // ghost vertex always last
        let t = match t.iter().position(|&v| v == GHOST) {
            Some(0) => [t[1], t[2], t[0]],
            Some(1) => [t[2], t[0], t[1]],
            _ => t,
        };
        let id = self.tris.len();
        for e in directed_edges(t) {
            self.edges.insert(e, id);
        }
        self.tris.push(t);
        self.alive.push(true);
    }

    fn remove(&mut self, id: usize) {
        self.alive[id] = false;
        for e in directed_edges(self.tris[id]) {
            if self.edges.get(&e) == Some(&id) {
                self.edges.remove(&e);
            }
        }
    }

    fn p(&self, i: usize) -> Point {
        self.pts[i]
    }

    /// Triangles that must be part of the cavity: real triangles containing
    /// `q` (boundary included) and ghost triangles whose edge `q` strictly sees.
    fn is_seed(&self, t: [usize; 3], q: Point) -> bool {
        if t[2] == GHOST {
            orient2d(self.p(t[0]), self.p(t[1]), q).0 > 0.0
        } else {
            (0..3).all(|k| orient2d(self.p(t[k]), self.p(t[(k + 1) % 3]), q).0 >= 0.0)
        }
    }

    fn conflicts(&self, t: [usize; 3], q: Point) -> bool {
        if t[2] == GHOST {
            let (a, b) = (self.p(t[0]), self.p(t[1]));
            let o = orient2d(a, b, q).0;
            o > 0.0 || (o == 0.0 && strictly_between(a, b, q))
        } else {
            in_circumcircle(self.p(t[0]), self.p(t[1]), self.p(t[2]), q)
        }
    }

    fn insert(&mut self, pi: usize) {
        let q = self.p(pi);
        let mut in_cavity: HashSet<usize> = HashSet::new();
        let mut queue = VecDeque::new();
        for id in 0..self.tris.len() {
            if self.alive[id] && self.is_seed(self.tris[id], q) {
                in_cavity.insert(id);
                queue.push_back(id);
            }
        }
        let mut order = Vec::new();
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for (u, v) in directed_edges(self.tris[id]) {
                if let Some(&nb) = self.edges.get(&(v, u)) {
                    if !in_cavity.contains(&nb) && self.conflicts(self.tris[nb], q) {
                        in_cavity.insert(nb);
                        queue.push_back(nb);
                    }
                }
            }
        }

        let mut boundary = Vec::new();
        for &id in &order {
            for (u, v) in directed_edges(self.tris[id]) {
                let outside = self.edges.get(&(v, u)).is_none_or(|nb| !in_cavity.contains(nb));
                if outside {
                    boundary.push((u, v));
                }
            }
        }
        for &id in &order {
            self.remove(id);
        }
        for (u, v) in boundary {
            debug_assert!(
                u == GHOST || v == GHOST || orient2d(self.p(u), self.p(v), q).0 > 0.0,
                "cavity is not star-shaped around the new point"
            );
            self.add([u, v, pi]);
        }
    }
}

fn directed_edges(t: [usize; 3]) -> [(usize, usize); 3] {
    [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
}

fn strictly_between(a: Point, b: Point, q: Point) -> bool {
    let dot = (q.0 - a.0) * (b.0 - a.0) + (q.1 - a.1) * (b.1 - a.1);
    let len2 = (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
    dot > 0.0 && dot < len2
}

/// Delaunay triangulation of `points`, inserting them in input order.
///
/// Cocircular configurations keep the triangles that already exist: a new
/// point invalidates a triangle only when it lies inside its circumcircle by
/// more than the tolerance.
pub fn delaunay(points: &[Point]) -> Result<Triangulation, TriangulationError> {
    let key = |p: Point| ((p.0 + 0.0).to_bits(), (p.1 + 0.0).to_bits());
    let mut seen = HashSet::new();
    let distinct: Vec<usize> = (0..points.len()).filter(|&i| seen.insert(key(points[i]))).collect();
    if distinct.len() < 3 {
        return Err(TriangulationError::TooFewPoints(distinct.len()));
    }
    let (i0, i1) = (distinct[0], distinct[1]);
    let i2 = distinct[2..]
        .iter()
        .copied()
        .find(|&k| !collinear(points[i0], points[i1], points[k]))
        .ok_or(TriangulationError::Collinear(distinct.len()))?;

    let mut mesh = Mesh {
        pts: points,
        tris: Vec::new(),
        alive: Vec::new(),
        edges: HashMap::new(),
    };
    let (a, b, c) = if orient2d(points[i0], points[i1], points[i2]).0 > 0.0 {
        (i0, i1, i2)
    } else {
        (i0, i2, i1)
    };
    mesh.add([a, b, c]);
    mesh.add([b, a, GHOST]);
    mesh.add([c, b, GHOST]);
    mesh.add([a, c, GHOST]);

    for &k in &distinct[2..] {
        if k != i2 {
            mesh.insert(k);
        }
    }

    let triangles: Vec<[usize; 3]> = mesh
        .tris
        .iter()
        .zip(&mesh.alive)
        .filter(|(t, &alive)| alive && t[2] != GHOST)
        .map(|(t, _)| *t)
        .collect();
    Ok(Triangulation::from_triangles(points.to_vec(), triangles))
}
