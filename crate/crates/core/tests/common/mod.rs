//! Brute-force reference implementations used by the integration tests.
#![allow(dead_code)]

use pairwise_core::image_io::GrayImage;

/// Min eigenvalue of the window-summed gradient products at every pixel,
/// computed pixel by pixel straight from the definition.
pub fn shi_tomasi_oracle(img: &GrayImage, radius: usize) -> Vec<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = |x: isize, y: isize| img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let sobel_x = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let sobel_y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let grad = |x: isize, y: isize| {
        let (mut gx, mut gy) = (0.0, 0.0);
        for (j, dy) in (-1..=1).enumerate() {
            for (i, dx) in (-1..=1).enumerate() {
                let v = px(x + dx, y + dy);
                gx += sobel_x[j][i] * v;
                gy += sobel_y[j][i] * v;
            }
        }
        (gx, gy)
    };
    let r = radius as isize;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (gx, gy) = grad((x + dx).clamp(0, w - 1), (y + dy).clamp(0, h - 1));
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                }
            }
            // roots of t^2 - (a + c) t + (ac - b^2)
            let tr = a + c;
            let det = a * c - b * b;
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            out.push(((tr - disc) / 2.0).max(0.0));
        }
    }
    out
}

pub fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// In-circle determinant (positive when `d` is inside the circle through
/// counter-clockwise `a, b, c`) and the magnitude of its terms.
pub fn incircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> (f64, f64) {
    let m = [
        [a.0 - d.0, a.1 - d.1, (a.0 - d.0).powi(2) + (a.1 - d.1).powi(2)],
        [b.0 - d.0, b.1 - d.1, (b.0 - d.0).powi(2) + (b.1 - d.1).powi(2)],
        [c.0 - d.0, c.1 - d.1, (c.0 - d.0).powi(2) + (c.1 - d.1).powi(2)],
    ];
    let terms = [
        m[0][0] * (m[1][1] * m[2][2] - m[2][1] * m[1][2]),
        -m[0][1] * (m[1][0] * m[2][2] - m[2][0] * m[1][2]),
        m[0][2] * (m[1][0] * m[2][1] - m[2][0] * m[1][1]),
    ];
    let scale = m[0][0].abs() * (m[1][1] * m[2][2]).abs().max((m[2][1] * m[1][2]).abs())
        + m[0][1].abs() * (m[1][0] * m[2][2]).abs().max((m[2][0] * m[1][2]).abs())
        + m[0][2].abs() * (m[1][0] * m[2][1]).abs().max((m[2][0] * m[1][1]).abs());
    (terms.iter().sum(), scale)
}

/// Number of distinct points on the convex hull boundary, including points
/// lying in the interior of hull edges.
pub fn hull_boundary_count(points: &[(f64, f64)]) -> usize {
    let n = points.len();
    let mut on_hull = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if points[i] == points[j] {
                continue;
            }
            let supporting = (0..n).all(|k| orient(points[i], points[j], points[k]) >= 0.0);
            if supporting {
                for k in 0..n {
                    if orient(points[i], points[j], points[k]) == 0.0 {
                        on_hull[k] = true;
                    }
                }
            }
        }
    }
    on_hull.iter().filter(|&&b| b).count()
}

/// One-vs-rest metrics computed from binary 2x2 reductions.
/// Returns `[accuracy, f1, recall, precision, specificity]` macro averages.
pub fn metrics_oracle(counts: &[Vec<u64>]) -> [f64; 5] {
    let k = counts.len();
    let total: u64 = counts.iter().flatten().sum();
    let mut sums = [0.0; 5];
    for c in 0..k {
        // binary confusion [[tp, fn], [fp, tn]]
        let mut bin = [[0u64; 2]; 2];
        for (t, row) in counts.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                bin[usize::from(t != c)][usize::from(p != c)] += v;
            }
        }
        let [[tp, fn_], [fp, tn]] = bin;
        let pos = tp + fn_;
        let predicted = tp + fp;
        let neg = fp + tn;
        let acc = 1.0 - (fp + fn_) as f64 / total as f64;
        let recall = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let f1 = if pos == 0 || tp == 0 { 0.0 } else { 2.0 * tp as f64 / (pos + predicted) as f64 };
        let spec = if neg == 0 { 1.0 } else { tn as f64 / neg as f64 };
        for (s, v) in sums.iter_mut().zip([acc, f1, recall, precision, spec]) {
            *s += v;
        }
    }
    sums.map(|s| s / k as f64)
}

/// Indices of the `k` nearest rows, by squared distance then index.
pub fn brute_knn(points: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}
