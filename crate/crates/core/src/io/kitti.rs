//! SemanticKITTI scan (`.bin`) and label (`.label`) files.
//!
//! A scan is a sequence of 16-byte records, four little-endian `f32`
//! values `(x, y, z, intensity)`. A label file holds one little-endian
//! `u32` per point: the low 16 bits are the semantic class, the high 16
//! bits the instance id.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const POINT_BYTES: usize = 16;
const LABEL_BYTES: usize = 4;

/// A decoded scan. Records with non-finite values are left out of `cloud`
/// and listed in `rejected` by record position.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: PointCloud,
    pub records: usize,
    pub rejected: Vec<usize>,
}

impl Scan {
    /// Attaches per-record labels, skipping the records rejected on read.
    pub fn with_labels(self, labels: &[LabelRecord]) -> Result<Scan> {
        if labels.len() != self.records {
            return Err(Error::LabelCount { expected: self.records, found: labels.len() });
        }
        let mut rejected = self.rejected.iter().peekable();
        let semantic = labels
            .iter()
            .enumerate()
            .filter(|(m, _)| {
                if rejected.peek() == Some(&m) {
                    rejected.next();
                    false
                } else {
                    true
                }
            })
            .map(|(_, l)| l.semantic)
            .collect();
        Ok(Scan { cloud: self.cloud.with_labels(semantic)?, ..self })
    }
}

/// Decoder for one on-disk scan layout.
pub trait ScanFormat {
    fn decode(&self, path: &Path, bytes: &[u8]) -> Result<Scan>;
}

/// Four little-endian `f32` channels per point.
#[derive(Debug, Clone, Copy, Default)]
pub struct KittiBin;

impl ScanFormat for KittiBin {
    fn decode(&self, path: &Path, bytes: &[u8]) -> Result<Scan> {
        if !bytes.len().is_multiple_of(POINT_BYTES) {
            return Err(Error::malformed(
                path,
                format!("{} bytes is not a multiple of the {POINT_BYTES}-byte point record", bytes.len()),
            ));
        }
        let records = bytes.len() / POINT_BYTES;
        let mut kept = Vec::with_capacity(records);
        let mut rejected = Vec::new();
        for (m, chunk) in bytes.chunks_exact(POINT_BYTES).enumerate() {
            let mut record = [0f32; 4];
            for (v, b) in record.iter_mut().zip(chunk.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().expect("4-byte chunk"));
            }
            if record.iter().all(|v| v.is_finite()) {
                kept.push(record);
            } else {
                rejected.push(m);
            }
        }
        Ok(Scan { cloud: PointCloud::from_xyzi(&kept)?, records, rejected })
    }
}

pub fn read_scan_with(format: &impl ScanFormat, path: impl AsRef<Path>) -> Result<Scan> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    format.decode(path, &bytes)
}

/// Reads a `.bin` scan.
pub fn read_scan(path: impl AsRef<Path>) -> Result<Scan> {
    read_scan_with(&KittiBin, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRecord {
    pub semantic: u16,
    pub instance: u16,
}

impl LabelRecord {
    pub fn from_raw(raw: u32) -> Self {
        LabelRecord { semantic: (raw & 0xffff) as u16, instance: (raw >> 16) as u16 }
    }

    pub fn raw(self) -> u32 {
        ((self.instance as u32) << 16) | self.semantic as u32
    }
}

pub fn decode_labels_bytes(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<LabelRecord>> {
    if !bytes.len().is_multiple_of(LABEL_BYTES) {
        return Err(Error::malformed(
            path,
            format!("{} bytes is not a multiple of the {LABEL_BYTES}-byte label record", bytes.len()),
        ));
    }
    let found = bytes.len() / LABEL_BYTES;
    if found != expected {
        return Err(Error::LabelCount { expected, found });
    }
    Ok(bytes
        .chunks_exact(LABEL_BYTES)
        .map(|b| LabelRecord::from_raw(u32::from_le_bytes(b.try_into().expect("4-byte chunk"))))
        .collect())
}

/// Reads a `.label` file that must hold exactly `expected` records.
pub fn read_labels(path: impl AsRef<Path>, expected: usize) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels_bytes(path, &bytes, expected)
}

/// Reads a scan and, when given, its label file.
pub fn read_labeled_scan(scan: impl AsRef<Path>, labels: Option<&Path>) -> Result<Scan> {
    let scan = read_scan(scan)?;
    match labels {
        Some(path) => {
            let records = read_labels(path, scan.records)?;
            scan.with_labels(&records)
        }
        None => Ok(scan),
    }
}

/// Encodes positions plus the fourth feature channel (intensity; zero when
/// the cloud has fewer channels).
pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for (m, p) in cloud.positions().iter().enumerate() {
        let intensity = cloud.feature(m).get(3).copied().unwrap_or(0.0);
        for v in [p[0], p[1], p[2], intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_scan(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_scan(cloud)).map_err(|e| Error::io(path, e))
}

/// Writes semantic labels with zero instance ids.
pub fn write_labels(path: impl AsRef<Path>, labels: &[u16]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let bytes: Vec<u8> = labels.iter().flat_map(|&l| (l as u32).to_le_bytes()).collect();
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}
