//! Point-to-voxel assignment and per-voxel aggregation.
//!
//! Points are binned in fixed-size chunks into partial grids which are
//! merged by channel-wise max, count sum and label-histogram sum. All three
//! merges are associative and commutative and the final voxel list is
//! sorted by index, so the result does not depend on the worker count.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::cloud::PointCloud;
use crate::config::{GridConfig, OutOfRangePolicy, PartitionScheme};
use crate::error::{Error, Result};
use crate::geometry::{multiscale_boundaries, to_cylindrical, CylindricalPoint, RadialBoundaries};

const CHUNK: usize = 1 << 14;
const AXIS_BITS: u32 = 21;
const AXIS_MASK: u64 = (1 << AXIS_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelIndex {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl VoxelIndex {
    pub fn new(i: u32, j: u32, k: u32) -> Self {
        VoxelIndex { i, j, k }
    }

    /// Packed key; orders the same way as `(i, j, k)`.
    pub fn key(self) -> u64 {
        ((self.i as u64) << (2 * AXIS_BITS)) | ((self.j as u64) << AXIS_BITS) | self.k as u64
    }

    pub fn from_key(key: u64) -> Self {
        VoxelIndex {
            i: (key >> (2 * AXIS_BITS)) as u32,
            j: ((key >> AXIS_BITS) & AXIS_MASK) as u32,
            k: (key & AXIS_MASK) as u32,
        }
    }

    /// Index of the enclosing voxel `s` scales up.
    pub fn coarsen(self, s: u32) -> Self {
        VoxelIndex { i: self.i >> s, j: self.j >> s, k: self.k >> s }
    }
}

/// Bin of `value` in `n` equal bins over `[lo, lo + n * step)`.
fn uniform_bin(offset: f64, span: f64, n: usize, policy: OutOfRangePolicy) -> Option<u32> {
    let t = offset / span;
    if (0.0..1.0).contains(&t) {
        // t < 1 but t * n may still round up to n
        Some(((t * n as f64) as usize).min(n - 1) as u32)
    } else {
        match policy {
            OutOfRangePolicy::Clamp if t < 0.0 => Some(0),
            OutOfRangePolicy::Clamp => Some(n as u32 - 1),
            OutOfRangePolicy::Drop => None,
        }
    }
}

/// Voxel of a cylindrical point, or `None` when it falls outside the grid
/// under [`OutOfRangePolicy::Drop`].
pub fn voxel_index(p: &CylindricalPoint, config: &GridConfig, boundaries: &RadialBoundaries) -> Option<VoxelIndex> {
    let policy = config.out_of_range;
    let i = boundaries.locate(p.r, policy)?;
    // phi is already in [-pi, pi); fold anything else onto the ring
    let phi = p.phi.rem_euclid(std::f64::consts::TAU);
    let phi = if phi >= std::f64::consts::PI { phi - std::f64::consts::TAU } else { phi };
    let j = uniform_bin(phi + std::f64::consts::PI, std::f64::consts::TAU, config.n_phi, OutOfRangePolicy::Clamp)?;
    let k = uniform_bin(p.z - config.z_min, config.z_max - config.z_min, config.n_z, policy)?;
    Some(VoxelIndex::new(i as u32, j, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voxel {
    pub index: VoxelIndex,
    pub point_count: u32,
    /// Majority class of the member points; ties go to the smallest id.
    pub label: Option<u16>,
    /// Channel-wise maximum of the member point features.
    pub feature: Vec<f32>,
}

/// Non-empty voxels of one aggregation scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLevel {
    scale: u32,
    dims: [usize; 3],
    voxels: Vec<Voxel>,
    slots: HashMap<u64, usize>,
}

impl ScaleLevel {
    pub(crate) fn from_voxels(scale: u32, dims: [usize; 3], mut voxels: Vec<Voxel>) -> Result<Self> {
        voxels.sort_by_key(|v| v.index);
        let mut slots = HashMap::with_capacity(voxels.len());
        for (n, v) in voxels.iter().enumerate() {
            let VoxelIndex { i, j, k } = v.index;
            if i as usize >= dims[0] || j as usize >= dims[1] || k as usize >= dims[2] {
                return Err(Error::Config(format!(
                    "voxel ({i}, {j}, {k}) outside {}x{}x{} grid",
                    dims[0], dims[1], dims[2]
                )));
            }
            if v.point_count == 0 {
                return Err(Error::Config(format!("voxel ({i}, {j}, {k}) is empty")));
            }
            if slots.insert(v.index.key(), n).is_some() {
                return Err(Error::Config(format!("duplicate voxel ({i}, {j}, {k})")));
            }
        }
        Ok(ScaleLevel { scale, dims, voxels, slots })
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// `(n_r, n_phi, n_z)` at this scale.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Voxels sorted by index.
    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn get(&self, index: VoxelIndex) -> Option<&Voxel> {
        self.slots.get(&index.key()).map(|&n| &self.voxels[n])
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

/// Sparse cylindrical voxel grid, one level per aggregation scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVoxelGrid {
    config: GridConfig,
    boundaries: RadialBoundaries,
    channels: usize,
    accepted: usize,
    dropped: usize,
    levels: Vec<ScaleLevel>,
}

impl SparseVoxelGrid {
    pub(crate) fn from_parts(
        config: GridConfig,
        channels: usize,
        accepted: usize,
        dropped: usize,
        levels: Vec<ScaleLevel>,
    ) -> Result<Self> {
        let boundaries = RadialBoundaries::for_config(&config)?;
        if levels.len() != config.scales as usize {
            return Err(Error::Config(format!("grid holds {} scales, config expects {}", levels.len(), config.scales)));
        }
        for (s, level) in levels.iter().enumerate() {
            if level.scale as usize != s || level.dims != scale_dims(&config, s as u32) {
                return Err(Error::Config(format!("scale level {s} has wrong shape")));
            }
            if level.voxels.iter().any(|v| v.feature.len() != channels) {
                return Err(Error::Config(format!("scale {s} feature width differs from {channels}")));
            }
            let total: u64 = level.voxels.iter().map(|v| v.point_count as u64).sum();
            if total != accepted as u64 {
                return Err(Error::Config(format!("scale {s} holds {total} points, grid accepted {accepted}")));
            }
        }
        Ok(SparseVoxelGrid { config, boundaries, channels, accepted, dropped, levels })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn boundaries(&self) -> &RadialBoundaries {
        &self.boundaries
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Points assigned to a voxel.
    pub fn accepted_points(&self) -> usize {
        self.accepted
    }

    /// Points discarded by the drop policy.
    pub fn dropped_points(&self) -> usize {
        self.dropped
    }

    /// Finest level.
    pub fn base(&self) -> &ScaleLevel {
        &self.levels[0]
    }

    pub fn levels(&self) -> &[ScaleLevel] {
        &self.levels
    }

    pub fn voxels(&self) -> &[Voxel] {
        self.base().voxels()
    }

    pub fn len(&self) -> usize {
        self.base().len()
    }

    pub fn is_empty(&self) -> bool {
        self.base().is_empty()
    }

    pub fn get(&self, index: VoxelIndex) -> Option<&Voxel> {
        self.base().get(index)
    }

    pub fn has_labels(&self) -> bool {
        self.voxels().iter().any(|v| v.label.is_some())
    }

    /// Voxel of `p` under this grid's configuration.
    pub fn locate(&self, p: &CylindricalPoint) -> Option<VoxelIndex> {
        voxel_index(p, &self.config, &self.boundaries)
    }

    /// Radial boundaries of scale `s`; every `2^s`-th base boundary.
    pub fn scale_boundaries(&self, s: u32) -> Result<RadialBoundaries> {
        self.boundaries.coarsen(1 << s)
    }

    /// Concatenated multi-scale feature of a base voxel: its own max-pooled
    /// feature followed by the features of its ancestors, coarsest last.
    pub fn concat_feature(&self, index: VoxelIndex) -> Option<Vec<f32>> {
        let mut out = Vec::with_capacity(self.channels * self.levels.len());
        for level in &self.levels {
            out.extend_from_slice(&level.get(index.coarsen(level.scale))?.feature);
        }
        Some(out)
    }
}

fn scale_dims(config: &GridConfig, s: u32) -> [usize; 3] {
    [config.n_r >> s, config.n_phi >> s, config.n_z >> s]
}

type LabelHistogram = SmallVec<[(u16, u32); 2]>;

/// Accumulator for one scale of one chunk.
#[derive(Default)]
struct Partial {
    slots: HashMap<u64, usize>,
    keys: Vec<u64>,
    counts: Vec<u32>,
    features: Vec<f32>,
    labels: Vec<LabelHistogram>,
}

fn max_into(acc: &mut [f32], values: &[f32]) {
    for (a, &v) in acc.iter_mut().zip(values) {
        // total order so that -0.0 < 0.0 and the merge is order-free
        if v.total_cmp(a) == Ordering::Greater {
            *a = v;
        }
    }
}

fn add_label(hist: &mut LabelHistogram, label: u16, count: u32) {
    match hist.iter_mut().find(|(l, _)| *l == label) {
        Some((_, c)) => *c += count,
        None => hist.push((label, count)),
    }
}

impl Partial {
    fn add(&mut self, key: u64, feature: &[f32], label: Option<u16>) {
        let channels = feature.len();
        let slot = *self.slots.entry(key).or_insert_with(|| {
            self.keys.push(key);
            self.counts.push(0);
            self.features.extend_from_slice(feature);
            self.labels.push(LabelHistogram::new());
            self.keys.len() - 1
        });
        self.counts[slot] += 1;
        max_into(&mut self.features[slot * channels..(slot + 1) * channels], feature);
        if let Some(label) = label {
            add_label(&mut self.labels[slot], label, 1);
        }
    }

    fn merge(mut self, other: Partial, channels: usize) -> Partial {
        if self.keys.len() < other.keys.len() {
            return other.merge(self, channels);
        }
        for (n, key) in other.keys.iter().enumerate() {
            let feature = &other.features[n * channels..(n + 1) * channels];
            match self.slots.get(key) {
                Some(&slot) => {
                    self.counts[slot] += other.counts[n];
                    max_into(&mut self.features[slot * channels..(slot + 1) * channels], feature);
                    for &(label, count) in &other.labels[n] {
                        add_label(&mut self.labels[slot], label, count);
                    }
                }
                None => {
                    self.slots.insert(*key, self.keys.len());
                    self.keys.push(*key);
                    self.counts.push(other.counts[n]);
                    self.features.extend_from_slice(feature);
                    self.labels.push(other.labels[n].clone());
                }
            }
        }
        self
    }

    fn into_voxels(self, channels: usize) -> Vec<Voxel> {
        let mut order: Vec<usize> = (0..self.keys.len()).collect();
        order.sort_unstable_by_key(|&n| self.keys[n]);
        order
            .into_iter()
            .map(|n| Voxel {
                index: VoxelIndex::from_key(self.keys[n]),
                point_count: self.counts[n],
                label: majority(&self.labels[n]),
                feature: self.features[n * channels..(n + 1) * channels].to_vec(),
            })
            .collect()
    }
}

/// Modal class; ties broken by the smallest class id.
fn majority(hist: &LabelHistogram) -> Option<u16> {
    hist.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|&(label, _)| label)
}

/// Chunk result: one partial per scale plus the dropped-point count.
struct ChunkGrid {
    levels: Vec<Partial>,
    dropped: usize,
}

/// Builds sparse grids for one configuration.
#[derive(Debug, Clone)]
pub struct Voxelizer {
    config: GridConfig,
    boundaries: RadialBoundaries,
    threads: Option<usize>,
}

impl Voxelizer {
    pub fn new(config: GridConfig) -> Result<Self> {
        let boundaries = RadialBoundaries::for_config(&config)?;
        if config.scales > 1 {
            multiscale_boundaries(&config.scheme, config.n_r, config.scales - 1)?;
        }
        Ok(Voxelizer { config, boundaries, threads: None })
    }

    /// Caps the worker count; `None` uses the global rayon pool.
    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads.filter(|&t| t > 0);
        self
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn boundaries(&self) -> &RadialBoundaries {
        &self.boundaries
    }

    /// Voxel of point `m`, or `None` if it is dropped.
    pub fn locate_point(&self, cloud: &PointCloud, m: usize) -> Option<VoxelIndex> {
        // positions are validated finite on construction
        let p = to_cylindrical(cloud.position(m)).ok()?;
        voxel_index(&p, &self.config, &self.boundaries)
    }

    fn bin_chunk(&self, cloud: &PointCloud, range: std::ops::Range<usize>) -> ChunkGrid {
        let scales = self.config.scales;
        let mut levels: Vec<Partial> = (0..scales).map(|_| Partial::default()).collect();
        let mut dropped = 0;
        let labels = cloud.labels();
        for m in range {
            let Some(index) = self.locate_point(cloud, m) else {
                dropped += 1;
                continue;
            };
            let label = labels.map(|l| l[m]);
            for (s, level) in levels.iter_mut().enumerate() {
                level.add(index.coarsen(s as u32).key(), cloud.feature(m), label);
            }
        }
        ChunkGrid { levels, dropped }
    }

    pub fn voxelize(&self, cloud: &PointCloud) -> Result<SparseVoxelGrid> {
        let channels = cloud.channels();
        let chunks = cloud.len().div_ceil(CHUNK);
        let run = || {
            (0..chunks)
                .into_par_iter()
                .map(|c| self.bin_chunk(cloud, c * CHUNK..((c + 1) * CHUNK).min(cloud.len())))
                .reduce(
                    || ChunkGrid { levels: (0..self.config.scales).map(|_| Partial::default()).collect(), dropped: 0 },
                    |a, b| ChunkGrid {
                        levels: a.levels.into_iter().zip(b.levels).map(|(x, y)| x.merge(y, channels)).collect(),
                        dropped: a.dropped + b.dropped,
                    },
                )
        };
        let merged = match self.threads {
            Some(threads) => rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {threads} workers: {e}")))?
                .install(run),
            None => run(),
        };
        let levels = merged
            .levels
            .into_iter()
            .enumerate()
            .map(|(s, partial)| ScaleLevel {
                scale: s as u32,
                dims: scale_dims(&self.config, s as u32),
                slots: HashMap::new(),
                voxels: partial.into_voxels(channels),
            })
            .map(|mut level| {
                level.slots = level.voxels.iter().enumerate().map(|(n, v)| (v.index.key(), n)).collect();
                level
            })
            .collect();
        Ok(SparseVoxelGrid {
            config: self.config.clone(),
            boundaries: self.boundaries.clone(),
            channels,
            accepted: cloud.len() - merged.dropped,
            dropped: merged.dropped,
            levels,
        })
    }
}

/// Voxelizes `cloud`; one level per configured scale.
pub fn voxelize(cloud: &PointCloud, config: &GridConfig) -> Result<SparseVoxelGrid> {
    Voxelizer::new(config.clone())?.voxelize(cloud)
}

/// Multi-scale voxelization. Coarse radial bins follow the api multi-scale
/// progression, so only the api scheme is accepted.
pub fn multiscale_voxelize(cloud: &PointCloud, config: &GridConfig) -> Result<SparseVoxelGrid> {
    if !matches!(config.scheme, PartitionScheme::Api { .. }) {
        return Err(Error::UnsupportedScheme(config.scheme.name()));
    }
    voxelize(cloud, config)
}

/// Per-point label after the point -> voxel -> point round trip. Dropped
/// points decode to `None`.
pub fn decode_labels(grid: &SparseVoxelGrid, cloud: &PointCloud) -> Result<Vec<Option<u16>>> {
    if cloud.labels().is_none() || (!grid.has_labels() && !grid.is_empty()) {
        return Err(Error::MissingLabels);
    }
    let indices: Vec<Option<VoxelIndex>> =
        (0..cloud.len()).map(|m| to_cylindrical(cloud.position(m)).ok().and_then(|p| grid.locate(&p))).collect();
    let accepted = indices.iter().filter(|i| i.is_some()).count();
    if accepted != grid.accepted_points() {
        return Err(Error::GridMismatch { grid: grid.accepted_points(), cloud: accepted });
    }
    indices
        .into_iter()
        .map(|index| match index {
            None => Ok(None),
            Some(index) => grid
                .get(index)
                .map(|v| v.label)
                .ok_or(Error::GridMismatch { grid: grid.accepted_points(), cloud: accepted }),
        })
        .collect()
}
