//! PFV1 / PFV2 binary feature files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "PFV1" or "PFV2"
//! dim          u32
//! count        u32
//! count x record:
//!   id_len     u32
//!   image_id   id_len bytes, UTF-8
//!   point_idx  u32
//!   x, y       f64, f64
//!   origin     u8        PFV2 only: 0 = original, 1 = paired
//!   vector     dim x f32
//! ```
//!
//! PFV1 carries original features only.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::patch_descriptor::{FeatureRecord, Origin};

pub const PFV1_MAGIC: &[u8; 4] = b"PFV1";
pub const PFV2_MAGIC: &[u8; 4] = b"PFV2";

#[derive(Debug, Error)]
pub enum PfvError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("file truncated inside record {0}")]
    Truncated(usize),
    #[error("record {0}: image id is not valid UTF-8")]
    InvalidUtf8(usize),
    #[error("record {0}: invalid origin tag {1}")]
    InvalidOrigin(usize, u8),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {index} has {found} values, file dimension is {dim}")]
    RecordDimension { index: usize, dim: usize, found: usize },
    #[error("record {0} is a paired feature; PFV1 stores originals only")]
    PairedInPfv1(usize),
}

/// In-memory contents of a feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Version {
    V1,
    V2,
}

pub fn encode_pfv1(file: &FeatureFile) -> Result<Vec<u8>, PfvError> {
    encode(file, Version::V1)
}

pub fn encode_pfv2(file: &FeatureFile) -> Result<Vec<u8>, PfvError> {
    encode(file, Version::V2)
}

pub fn write_pfv1(path: &Path, file: &FeatureFile) -> Result<(), PfvError> {
    write_bytes(path, &encode_pfv1(file)?)
}

pub fn write_pfv2(path: &Path, file: &FeatureFile) -> Result<(), PfvError> {
    write_bytes(path, &encode_pfv2(file)?)
}

/// Reads a PFV1 file; a PFV2 magic is reported as a corrupt header.
pub fn read_pfv1(path: &Path) -> Result<FeatureFile, PfvError> {
    let bytes = read_bytes(path)?;
    match decode(&bytes)? {
        (Version::V1, file) => Ok(file),
        (Version::V2, _) => Err(PfvError::CorruptHeader("expected PFV1, found PFV2".into())),
    }
}

/// Reads either format.
pub fn read_any(path: &Path) -> Result<FeatureFile, PfvError> {
    decode(&read_bytes(path)?).map(|(_, f)| f)
}

pub fn decode_any(bytes: &[u8]) -> Result<FeatureFile, PfvError> {
    decode(bytes).map(|(_, f)| f)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, PfvError> {
    fs::read(path).map_err(|source| PfvError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PfvError> {
    fs::write(path, bytes).map_err(|source| PfvError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn encode(file: &FeatureFile, version: Version) -> Result<Vec<u8>, PfvError> {
    if file.dim == 0 {
        return Err(PfvError::CorruptHeader("dimension is zero".into()));
    }
    let dim = u32::try_from(file.dim).map_err(|_| PfvError::CorruptHeader("dimension exceeds u32".into()))?;
    let count = u32::try_from(file.records.len())
        .map_err(|_| PfvError::CorruptHeader("record count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(12 + file.records.len() * (32 + file.dim * 4));
    out.extend_from_slice(match version {
        Version::V1 => PFV1_MAGIC,
        Version::V2 => PFV2_MAGIC,
    });
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (i, rec) in file.records.iter().enumerate() {
        if rec.vector.len() != file.dim {
            return Err(PfvError::RecordDimension {
                index: i,
                dim: file.dim,
                found: rec.vector.len(),
            });
        }
        let id = rec.image_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&rec.point_index.to_le_bytes());
        out.extend_from_slice(&rec.point.0.to_le_bytes());
        out.extend_from_slice(&rec.point.1.to_le_bytes());
        match (version, rec.origin) {
            (Version::V1, Origin::Paired) => return Err(PfvError::PairedInPfv1(i)),
            (Version::V1, Origin::Original) => {}
            (Version::V2, origin) => out.push(match origin {
                Origin::Original => 0,
                Origin::Paired => 1,
            }),
        }
        for &v in &rec.vector {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    record: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PfvError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(PfvError::Truncated(self.record)),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], PfvError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, PfvError> {
        self.array().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, PfvError> {
        self.array().map(f64::from_le_bytes)
    }
}

fn decode(bytes: &[u8]) -> Result<(Version, FeatureFile), PfvError> {
    if bytes.len() < 12 {
        return Err(PfvError::CorruptHeader(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let version = match &bytes[..4] {
        m if m == PFV1_MAGIC => Version::V1,
        m if m == PFV2_MAGIC => Version::V2,
        m => return Err(PfvError::CorruptHeader(format!("bad magic {:?}", String::from_utf8_lossy(m)))),
    };
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(PfvError::CorruptHeader("dimension is zero".into()));
    }
    let min_record = 24 + dim * 4;
    if count.saturating_mul(min_record) > bytes.len() - 12 {
        return Err(PfvError::CorruptHeader(format!(
            "header claims {count} records of dimension {dim}, file holds {} payload bytes",
            bytes.len() - 12
        )));
    }

    let mut r = Reader { bytes, pos: 12, record: 0 };
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        r.record = i;
        let id_len = r.u32()? as usize;
        let image_id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| PfvError::InvalidUtf8(i))?
            .to_string();
        let point_index = r.u32()?;
        let point = (r.f64()?, r.f64()?);
        let origin = match version {
            Version::V1 => Origin::Original,
            Version::V2 => match r.take(1)?[0] {
                0 => Origin::Original,
                1 => Origin::Paired,
                t => return Err(PfvError::InvalidOrigin(i, t)),
            },
        };
        let vector = r
            .take(dim * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        records.push(FeatureRecord {
            image_id,
            point_index,
            point,
            origin,
            vector,
        });
    }
    if r.pos != bytes.len() {
        return Err(PfvError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok((version, FeatureFile { dim, records }))
}
