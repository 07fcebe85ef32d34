//! Grid containers.
//!
//! JSON:
//!
//! ```json
//! { "format": "NUCVOX1", "config": { ... }, "channels": 4,
//!   "accepted_points": 2, "dropped_points": 0,
//!   "voxels": [ { "i": 0, "j": 180, "k": 0, "count": 2, "label": 1, "feature": [ ... ] } ],
//!   "coarse_scales": [ { "scale": 1, "voxels": [ ... ] } ] }
//! ```
//!
//! Binary (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "NUCVOX1\0"
//! config    u32 length + UTF-8 JSON of the grid config
//! channels  u32
//! accepted  u64
//! dropped   u64
//! levels    u32, then per level:
//!   scale   u32
//!   count   u64, then per voxel: i, j, k, point_count, label as u32
//!           (0xFFFF_FFFF = unlabeled), then `channels` f32 features
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::voxelizer::{ScaleLevel, SparseVoxelGrid, Voxel, VoxelIndex};

pub const GRID_MAGIC: &str = "NUCVOX1";
const BINARY_MAGIC: &[u8; 8] = b"NUCVOX1\0";
const NO_LABEL: u32 = u32::MAX;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VoxelRecord {
    i: u32,
    j: u32,
    k: u32,
    count: u32,
    label: Option<u16>,
    feature: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoarseScale {
    scale: u32,
    voxels: Vec<VoxelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDocument {
    format: String,
    config: GridConfig,
    channels: usize,
    accepted_points: usize,
    dropped_points: usize,
    voxels: Vec<VoxelRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    coarse_scales: Vec<CoarseScale>,
}

fn records(level: &ScaleLevel) -> Vec<VoxelRecord> {
    level
        .voxels()
        .iter()
        .map(|v| VoxelRecord {
            i: v.index.i,
            j: v.index.j,
            k: v.index.k,
            count: v.point_count,
            label: v.label,
            feature: v.feature.clone(),
        })
        .collect()
}

fn voxels(records: Vec<VoxelRecord>) -> Vec<Voxel> {
    records
        .into_iter()
        .map(|r| Voxel {
            index: VoxelIndex::new(r.i, r.j, r.k),
            point_count: r.count,
            label: r.label,
            feature: r.feature,
        })
        .collect()
}

fn dims(config: &GridConfig, s: u32) -> [usize; 3] {
    [config.n_r >> s, config.n_phi >> s, config.n_z >> s]
}

pub fn grid_to_json(grid: &SparseVoxelGrid) -> Result<String> {
    let doc = GridDocument {
        format: GRID_MAGIC.into(),
        config: grid.config().clone(),
        channels: grid.channels(),
        accepted_points: grid.accepted_points(),
        dropped_points: grid.dropped_points(),
        voxels: records(grid.base()),
        coarse_scales: grid.levels()[1..]
            .iter()
            .map(|level| CoarseScale { scale: level.scale(), voxels: records(level) })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn grid_from_json(text: &str) -> Result<SparseVoxelGrid> {
    let doc: GridDocument = serde_json::from_str(text)?;
    if doc.format != GRID_MAGIC {
        return Err(Error::Config(format!("unsupported grid format {:?}, expected {GRID_MAGIC}", doc.format)));
    }
    doc.config.validate()?;
    let mut levels = vec![ScaleLevel::from_voxels(0, dims(&doc.config, 0), voxels(doc.voxels))?];
    for coarse in doc.coarse_scales {
        levels.push(ScaleLevel::from_voxels(coarse.scale, dims(&doc.config, coarse.scale), voxels(coarse.voxels))?);
    }
    SparseVoxelGrid::from_parts(doc.config, doc.channels, doc.accepted_points, doc.dropped_points, levels)
}

pub fn grid_to_binary(grid: &SparseVoxelGrid) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(grid.config())?;
    let mut out = Vec::new();
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(grid.channels() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.accepted_points() as u64).to_le_bytes());
    out.extend_from_slice(&(grid.dropped_points() as u64).to_le_bytes());
    out.extend_from_slice(&(grid.levels().len() as u32).to_le_bytes());
    for level in grid.levels() {
        out.extend_from_slice(&level.scale().to_le_bytes());
        out.extend_from_slice(&(level.len() as u64).to_le_bytes());
        for v in level.voxels() {
            let label = v.label.map_or(NO_LABEL, u32::from);
            for word in [v.index.i, v.index.j, v.index.k, v.point_count, label] {
                out.extend_from_slice(&word.to_le_bytes());
            }
            for f in &v.feature {
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
                Error::malformed("<grid>", format!("truncated at byte {} (wanted {n} more)", self.at))
            })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn grid_from_binary(bytes: &[u8]) -> Result<SparseVoxelGrid> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != BINARY_MAGIC {
        return Err(Error::malformed("<grid>", "missing NUCVOX1 magic"));
    }
    let config_len = r.u32()? as usize;
    let config: GridConfig = serde_json::from_slice(r.take(config_len)?)?;
    config.validate()?;
    let channels = r.u32()? as usize;
    let accepted = r.u64()? as usize;
    let dropped = r.u64()? as usize;
    let level_count = r.u32()?;
    let mut levels = Vec::new();
    for _ in 0..level_count {
        let scale = r.u32()?;
        let count = r.u64()? as usize;
        let mut voxels = Vec::with_capacity(count.min(bytes.len() / 20));
        for _ in 0..count {
            let (i, j, k, point_count, label) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let label = match label {
                NO_LABEL => None,
                l => Some(
                    u16::try_from(l).map_err(|_| Error::malformed("<grid>", format!("label {l} exceeds 16 bits")))?,
                ),
            };
            let feature = (0..channels).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            voxels.push(Voxel { index: VoxelIndex::new(i, j, k), point_count, label, feature });
        }
        levels.push(ScaleLevel::from_voxels(scale, dims(&config, scale.min(31)), voxels)?);
    }
    if r.at != bytes.len() {
        return Err(Error::malformed("<grid>", format!("{} trailing bytes", bytes.len() - r.at)));
    }
    SparseVoxelGrid::from_parts(config, channels, accepted, dropped, levels)
}

/// Writes JSON, or the binary container when the path ends in `.nucvox`.
pub fn save_grid(path: impl AsRef<Path>, grid: &SparseVoxelGrid) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_binary(path) { grid_to_binary(grid)? } else { grid_to_json(grid)?.into_bytes() };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<SparseVoxelGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        grid_from_binary(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::malformed(path, e.to_string()))?;
        grid_from_json(text)
    }
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "nucvox")
}
