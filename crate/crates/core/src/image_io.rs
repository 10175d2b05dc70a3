//! Loading, cropping and resizing of grayscale rasters.
//!
//! Everything downstream works on [`GrayImage`], a row-major grid of `f64`
//! intensities in `[0, 255]`. Inputs are binary or ASCII PGM and 8-bit PNG;
//! color PNGs are reduced to luminance with the BT.601 weights.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while reading or transforming images.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("pixel data truncated: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("crop rectangle {rect:?} exceeds {width}x{height} image")]
    CropOutOfBounds { rect: CropRect, width: usize, height: usize },
    #[error("target dimensions must be non-zero, got {0}x{1}")]
    ZeroDimension(usize, usize),
    #[error("invalid image: {0}")]
    Invalid(String),
}

/// Row-major grid of intensities in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(ImageError::Invalid(format!("intensity {v} outside [0, 255]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 255.0); width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel, clamping to `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 255.0));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Writes the image as binary PGM, rounding intensities to the nearest integer.
    pub fn write_pgm(&self, path: &Path) -> Result<(), ImageError> {
        let io_err = |source| ImageError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io_err)?;
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        file.write_all(&bytes).map_err(io_err)
    }
}

/// Axis-aligned crop rectangle in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    fn fits(&self, width: usize, height: usize) -> bool {
        self.width > 0
            && self.height > 0
            && self.x0.checked_add(self.width).is_some_and(|r| r <= width)
            && self.y0.checked_add(self.height).is_some_and(|b| b <= height)
    }
}

/// BT.601 luma, rounded to the nearest integer.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

/// Loads a PGM (P2/P5) or 8-bit PNG file as a grayscale image.
pub fn load_image(path: &Path) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

/// Decodes an in-memory PGM or PNG byte stream, sniffing the format from its magic.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else {
        Err(ImageError::UnsupportedFormat(
            "expected a PGM (P2/P5) or PNG signature".into(),
        ))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let binary = bytes[1] == b'5';
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        *field = next_pgm_token(bytes, &mut pos)?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptHeader(format!("empty raster {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::CorruptHeader(format!("maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedBitDepth(format!(
            "16-bit PGM (maxval {maxval})"
        )));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::CorruptHeader("raster size overflows".into()))?;
    let scale = 255.0 / maxval as f64;

    let raw: Vec<usize> = if binary {
        // exactly one whitespace byte separates maxval from the raster
        let start = pos + 1;
        let payload = bytes.get(start..).unwrap_or(&[]);
        if payload.len() < count {
            return Err(ImageError::Truncated {
                expected: count,
                found: payload.len(),
            });
        }
        payload[..count].iter().map(|&b| b as usize).collect()
    } else {
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            match next_pgm_token(bytes, &mut pos) {
                Ok(v) => values.push(v),
                Err(_) => {
                    return Err(ImageError::Truncated {
                        expected: count,
                        found: values.len(),
                    })
                }
            }
        }
        values
    };
    if let Some(v) = raw.iter().find(|&&v| v > maxval) {
        return Err(ImageError::Invalid(format!("sample {v} exceeds maxval {maxval}")));
    }
    let data = raw
        .into_iter()
        .map(|v| if maxval == 255 { v as f64 } else { (v as f64 * scale).round() })
        .collect();
    GrayImage::new(width, height, data)
}

/// Reads the next whitespace-delimited decimal token, skipping `#` comments.
fn next_pgm_token(bytes: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(ImageError::CorruptHeader("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::CorruptHeader(format!(
            "expected a number at byte {start}"
        )));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::CorruptHeader("number out of range".into()))
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    // palette and sub-byte grayscale are widened to 8 bits; 16-bit stays 16-bit
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::CorruptHeader(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedBitDepth(format!("{depth:?} PNG")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::CorruptHeader("PNG raster too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Invalid(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = color.samples();
    let mut data = Vec::with_capacity(width * height);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        for px in row[..width * channels].chunks(channels) {
            let v = match color {
                png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => px[0],
                png::ColorType::Rgb | png::ColorType::Rgba => luminance(px[0], px[1], px[2]),
                png::ColorType::Indexed => {
                    return Err(ImageError::UnsupportedFormat("unexpanded palette PNG".into()))
                }
            };
            data.push(v as f64);
        }
    }
    GrayImage::new(width, height, data)
}

/// Extracts `rect` from `img`.
pub fn crop(img: &GrayImage, rect: CropRect) -> Result<GrayImage, ImageError> {
    if !rect.fits(img.width, img.height) {
        return Err(ImageError::CropOutOfBounds {
            rect,
            width: img.width,
            height: img.height,
        });
    }
    let mut data = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y0..rect.y0 + rect.height {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + rect.x0..row + rect.x0 + rect.width]);
    }
    Ok(GrayImage {
        width: rect.width,
        height: rect.height,
        data,
    })
}

/// Bilinear resize with corner-aligned sampling: output corners map exactly
/// onto input corners.
pub fn resize(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage, ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension(width, height));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xs = sample_positions(img.width, width);
    let ys = sample_positions(img.height, height);
    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            data.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 255.0));
        }
    }
    Ok(GrayImage { width, height, data })
}

/// For each output index, the two bracketing source indices and the blend weight.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if dst == 1 || src == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}
