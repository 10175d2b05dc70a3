//! Generated image sets for tests and benchmarks.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image_io::{GrayImage, ImageError};
use crate::pipeline::LabeledImage;

/// A white axis-aligned square on black.
pub fn square_image(width: usize, height: usize, x0: usize, y0: usize, side: usize) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
            255.0
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// At most 5; class `c` uses shape and texture `c`.
    pub classes: usize,
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class: 20,
            width: 480,
            height: 360,
            noise_sigma: 6.0,
            seed: 0,
        }
    }
}

pub const CLASS_NAMES: [&str; 5] = ["triangle_stripes", "square_checker", "pentagon_dots", "hexagon_diagonal", "star_rings"];

fn polygon(class: usize, cx: f64, cy: f64, radius: f64, angle: f64) -> Vec<(f64, f64)> {
    let (n, inner) = match class {
        0 => (3, 1.0),
        1 => (4, 1.0),
        2 => (5, 1.0),
        3 => (6, 1.0),
        _ => (10, 0.45),
    };
    (0..n)
        .map(|k| {
            let r = if k % 2 == 1 { radius * inner } else { radius };
            let t = angle + 2.0 * PI * k as f64 / n as f64;
            (cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

fn inside(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut c = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            c = !c;
        }
        j = i;
    }
    c
}

/// Texture value in `[-1, 1]` at offset `(u, v)` from the shape center.
fn texture(class: usize, u: f64, v: f64) -> f64 {
    match class {
        0 => {
            if (v / 9.0).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 }
        }
        1 => {
            let s = (u / 14.0).floor() as i64 + (v / 14.0).floor() as i64;
            if s.rem_euclid(2) == 0 { 1.0 } else { -1.0 }
        }
        2 => {
            let (du, dv) = (u.rem_euclid(16.0) - 8.0, v.rem_euclid(16.0) - 8.0);
            if du * du + dv * dv < 16.0 { -1.0 } else { 1.0 }
        }
        3 => {
            if ((u + v) / 11.0).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 }
        }
        _ => {
            if ((u * u + v * v).sqrt() / 8.0).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 }
        }
    }
}

/// One image of `class`: a randomly placed, rotated and scaled textured
/// polygon over a noisy background.
pub fn synthetic_image(class: usize, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let radius = rng.random_range(0.22..0.32) * w.min(h);
    let cx = rng.random_range(radius + 4.0..w - radius - 4.0);
    let cy = rng.random_range(radius + 4.0..h - radius - 4.0);
    let angle = rng.random_range(0.0..2.0 * PI);
    let background = rng.random_range(40.0..70.0);
    let base = rng.random_range(160.0..190.0);
    let poly = polygon(class, cx, cy, radius, angle);
    let (ca, sa) = (angle.cos(), angle.sin());
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let mut data = Vec::with_capacity(cfg.width * cfg.height);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let clean = if inside(&poly, px, py) {
                let (dx, dy) = (px - cx, py - cy);
                base + 45.0 * texture(class, ca * dx + sa * dy, -sa * dx + ca * dy)
            } else {
                background
            };
            let v = clean + if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            data.push(v.round().clamp(0.0, 255.0));
        }
    }
    GrayImage::new(cfg.width, cfg.height, data).expect("dimensions match")
}

/// All images of the set, class by class. Each class draws from its own stream.
pub fn generate(cfg: &SyntheticConfig) -> (Vec<String>, Vec<LabeledImage>) {
    let classes = cfg.classes.min(CLASS_NAMES.len());
    let names: Vec<String> = CLASS_NAMES[..classes].iter().map(|s| s.to_string()).collect();
    let mut images = Vec::with_capacity(classes * cfg.per_class);
    for (class, name) in names.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(class as u64);
        for i in 0..cfg.per_class {
            images.push(LabeledImage {
                image_id: format!("{name}/img_{i:03}"),
                label: class,
                image: synthetic_image(class, cfg, &mut rng),
            });
        }
    }
    (names, images)
}

/// Writes the set as `root/<class>/img_NNN.pgm`.
pub fn write_dataset(root: &Path, cfg: &SyntheticConfig) -> Result<Vec<String>, ImageError> {
    let (names, images) = generate(cfg);
    for name in &names {
        std::fs::create_dir_all(root.join(name)).map_err(|source| ImageError::Io {
            path: root.join(name).display().to_string(),
            source,
        })?;
    }
    for img in &images {
        img.image.write_pgm(&root.join(format!("{}.pgm", img.image_id)))?;
    }
    Ok(names)
}
