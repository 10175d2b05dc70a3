//! Shi-Tomasi interest points.
//!
//! Sobel derivatives feed a window-summed structure matrix per pixel; the
//! corner score is its smaller eigenvalue. Detection keeps the strongest
//! responses above a fraction of the global maximum, greedily enforcing a
//! minimum spacing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_io::{GrayImage, ImageError};

#[derive(Debug, Error)]
pub enum CornerError {
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("invalid corner config: {0}")]
    InvalidConfig(String),
}

/// Dense real-valued field over an image grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Writes the field as PGM, linearly rescaled so the maximum maps to 255.
    pub fn write_pgm(&self, path: &Path) -> Result<(), ImageError> {
        let max = self.max();
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let img = GrayImage::from_fn(self.width, self.height, |x, y| {
            (self.get(x, y).max(0.0) * scale).round()
        });
        img.write_pgm(path)
    }
}

/// Windowed gradient products; the entries of the symmetric matrix M.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StructureMatrix {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl StructureMatrix {
    /// Smaller eigenvalue in closed form, clamped at zero.
    pub fn min_eigenvalue(&self) -> f64 {
        let half_trace = 0.5 * (self.sxx + self.syy);
        let half_diff = 0.5 * (self.sxx - self.syy);
        let s = half_trace - half_diff.hypot(self.sxy);
        s.max(0.0)
    }
}

/// A detected corner and its score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CornerConfig {
    /// Upper bound on returned points.
    pub max_points: usize,
    /// Images yielding fewer points than this are flagged by the CLI.
    pub min_points_target: usize,
    /// Minimum score as a fraction of the image's maximum score.
    pub quality_ratio: f64,
    /// Minimum Euclidean spacing between accepted points, in pixels.
    pub min_distance: f64,
    /// Half-width of the uniform summation window (1 means 3x3).
    pub window_radius: usize,
}

impl Default for CornerConfig {
    fn default() -> Self {
        Self {
            max_points: 15,
            min_points_target: 10,
            quality_ratio: 0.01,
            min_distance: 10.0,
            window_radius: 1,
        }
    }
}

impl CornerConfig {
    pub fn validate(&self) -> Result<(), CornerError> {
        let bad = |m: &str| Err(CornerError::InvalidConfig(m.to_string()));
        if !(self.quality_ratio > 0.0 && self.quality_ratio < 1.0) {
            return bad("quality_ratio must lie in (0, 1)");
        }
        if self.min_points_target < 1 || self.max_points < self.min_points_target {
            return bad("require max_points >= min_points_target >= 1");
        }
        if self.min_distance.is_nan() || self.min_distance < 0.0 {
            return bad("min_distance must be non-negative");
        }
        Ok(())
    }
}

/// Sobel derivatives with edge replication; `(I_x, I_y)`.
pub fn gradients(img: &GrayImage) -> Result<(ScalarField, ScalarField), CornerError> {
    check_size(img, 3)?;
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    gx.par_chunks_mut(w)
        .zip(gy.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (rx, ry))| {
            let y = y as isize;
            for x in 0..w {
                let xi = x as isize;
                let p = |dx: isize, dy: isize| img.get_clamped(xi + dx, y + dy);
                rx[x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
                ry[x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            }
        });
    Ok((
        ScalarField { width: w, height: h, data: gx },
        ScalarField { width: w, height: h, data: gy },
    ))
}

/// Per-pixel structure matrices: gradient products summed over a uniform
/// `(2r+1)^2` window, with edge replication of the products at the border.
pub fn structure_tensor(img: &GrayImage, cfg: &CornerConfig) -> Result<Vec<StructureMatrix>, CornerError> {
    let r = cfg.window_radius;
    check_size(img, 2 * r + 3)?;
    let (gx, gy) = gradients(img)?;
    let (w, h) = (img.width(), img.height());
    let products: Vec<StructureMatrix> = gx
        .data
        .iter()
        .zip(&gy.data)
        .map(|(&ix, &iy)| StructureMatrix {
            sxx: ix * ix,
            sxy: ix * iy,
            syy: iy * iy,
        })
        .collect();

    // separable box sum: rows first, then columns
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let ri = r as isize;
    let mut horiz = vec![StructureMatrix::default(); w * h];
    horiz.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            for dx in -ri..=ri {
                let p = products[y * w + clamp(x as isize + dx, w)];
                out.sxx += p.sxx;
                out.sxy += p.sxy;
                out.syy += p.syy;
            }
        }
    });
    let mut summed = vec![StructureMatrix::default(); w * h];
    summed.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            for dy in -ri..=ri {
                let p = horiz[clamp(y as isize + dy, h) * w + x];
                out.sxx += p.sxx;
                out.sxy += p.sxy;
                out.syy += p.syy;
            }
        }
    });
    Ok(summed)
}

/// Shi-Tomasi score `min(lambda1, lambda2)` at every pixel.
pub fn score_field(img: &GrayImage, cfg: &CornerConfig) -> Result<ScalarField, CornerError> {
    let tensor = structure_tensor(img, cfg)?;
    Ok(ScalarField {
        width: img.width(),
        height: img.height(),
        data: tensor.iter().map(StructureMatrix::min_eigenvalue).collect(),
    })
}

/// Detects up to `cfg.max_points` corners, strongest first.
///
/// Candidates must score above zero and at least `quality_ratio` times the
/// maximum score. They are visited in descending score order (ties by row,
/// then column) and accepted when no previously accepted point lies closer
/// than `min_distance`.
pub fn detect(img: &GrayImage, cfg: &CornerConfig) -> Result<Vec<InterestPoint>, CornerError> {
    cfg.validate()?;
    let field = score_field(img, cfg)?;
    Ok(select_points(&field, cfg))
}

pub(crate) fn select_points(field: &ScalarField, cfg: &CornerConfig) -> Vec<InterestPoint> {
    let max = field.max();
    if max <= 0.0 {
        return Vec::new();
    }
    let threshold = cfg.quality_ratio * max;
    let mut candidates: Vec<InterestPoint> = field
        .data
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0 && s >= threshold)
        .map(|(i, &score)| InterestPoint {
            x: i % field.width,
            y: i / field.width,
            score,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });

    let min_d2 = cfg.min_distance * cfg.min_distance;
    let mut accepted: Vec<InterestPoint> = Vec::with_capacity(cfg.max_points);
    for c in candidates {
        if accepted.len() == cfg.max_points {
            break;
        }
        let clear = accepted.iter().all(|a| {
            let dx = a.x as f64 - c.x as f64;
            let dy = a.y as f64 - c.y as f64;
            dx * dx + dy * dy >= min_d2
        });
        if clear {
            accepted.push(c);
        }
    }
    accepted
}

/// Writes points as `x,y,score` CSV with a header row.
pub fn write_points_csv(points: &[InterestPoint], path: &Path) -> std::io::Result<()> {
    let mut out = String::from("x,y,score\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.score);
    }
    fs::write(path, out)
}

fn check_size(img: &GrayImage, min: usize) -> Result<(), CornerError> {
    if img.width() < min || img.height() < min {
        return Err(CornerError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}
