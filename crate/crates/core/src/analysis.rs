//! Diagnostics for a partition scheme: label encoding error, point balance,
//! non-empty voxel counts and receptive length, per distance band.
//!
//! Points are banded by their own radius. Voxels are banded by the midpoint
//! of their radial bin. Anything at or beyond the last band edge is
//! reported under `outside`, so band values plus `outside` add up to the
//! overall totals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::geometry::{cell_volume, receptive_length, to_cylindrical, RadialBoundaries};
use crate::voxelizer::{decode_labels, SparseVoxelGrid, Voxelizer};

pub const REPORT_SCHEMA: &str = "nucvox.report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceBands {
    edges: Vec<f64>,
}

impl Default for DistanceBands {
    fn default() -> Self {
        DistanceBands { edges: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0] }
    }
}

impl DistanceBands {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("distance bands need at least 2 edges".into()));
        }
        if !edges.windows(2).all(|w| w[0].is_finite() && w[1].is_finite() && w[1] > w[0]) {
            return Err(Error::Config("distance band edges must be strictly increasing".into()));
        }
        Ok(DistanceBands { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Band `[lo, hi)` containing `r`.
    pub fn band_of(&self, r: f64) -> Option<usize> {
        if r < self.edges[0] || r >= self.edges[self.edges.len() - 1] {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= r) - 1)
    }

    fn ranges(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.edges.windows(2).map(|w| (w[0], w[1]))
    }
}

fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTally {
    pub points: usize,
    pub misencoded: usize,
}

impl ErrorTally {
    pub fn error(&self) -> Option<f64> {
        fraction(self.misencoded, self.points)
    }

    fn add(&mut self, wrong: bool) {
        self.points += 1;
        self.misencoded += wrong as usize;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingError {
    pub bands: Vec<ErrorTally>,
    pub outside: ErrorTally,
    pub overall: ErrorTally,
}

/// Compares each accepted point's label with its voxel's majority label.
pub fn encoding_error_for_grid(
    grid: &SparseVoxelGrid,
    cloud: &PointCloud,
    bands: &DistanceBands,
) -> Result<EncodingError> {
    let truth = cloud.labels().ok_or(Error::MissingLabels)?;
    let decoded = decode_labels(grid, cloud)?;
    let mut out = EncodingError {
        bands: vec![ErrorTally::default(); bands.len()],
        outside: ErrorTally::default(),
        overall: ErrorTally::default(),
    };
    for (m, label) in decoded.iter().enumerate() {
        let Some(label) = label else { continue };
        let wrong = *label != truth[m];
        let r = to_cylindrical(cloud.position(m))?.r;
        match bands.band_of(r) {
            Some(b) => out.bands[b].add(wrong),
            None => out.outside.add(wrong),
        }
        out.overall.add(wrong);
    }
    Ok(out)
}

/// Label encoding error of `cloud` under `config`. With `exclude_ignore`
/// the ignore class is removed before voting and counting.
pub fn encoding_error(
    cloud: &PointCloud,
    config: &GridConfig,
    bands: &DistanceBands,
    exclude_ignore: bool,
) -> Result<EncodingError> {
    if cloud.labels().is_none() {
        return Err(Error::MissingLabels);
    }
    let filtered;
    let cloud = if exclude_ignore {
        filtered = cloud.without_label(IGNORE_LABEL);
        &filtered
    } else {
        cloud
    };
    let grid = Voxelizer::new(config.clone())?.voxelize(cloud)?;
    encoding_error_for_grid(&grid, cloud, bands)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Occupancy {
    pub nonempty_voxels: usize,
    pub points: usize,
}

impl Occupancy {
    pub fn mean_points_per_cell(&self) -> Option<f64> {
        fraction(self.points, self.nonempty_voxels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    pub bands: Vec<Occupancy>,
    pub outside: Occupancy,
    pub total: Occupancy,
}

fn occupancy(grid: &SparseVoxelGrid, bands: &DistanceBands) -> OccupancyProfile {
    let mut out = OccupancyProfile {
        bands: vec![Occupancy::default(); bands.len()],
        outside: Occupancy::default(),
        total: Occupancy::default(),
    };
    let b = grid.boundaries();
    for v in grid.voxels() {
        let slot = match bands.band_of(b.center(v.index.i as usize)) {
            Some(n) => &mut out.bands[n],
            None => &mut out.outside,
        };
        for o in [slot, &mut out.total] {
            o.nonempty_voxels += 1;
            o.points += v.point_count as usize;
        }
    }
    out
}

/// Mean points per non-empty cell in each band; `None` for bands without
/// voxels. An empty grid yields an all-`None` profile.
pub fn density_profile(grid: &SparseVoxelGrid, bands: &DistanceBands) -> Vec<Option<f64>> {
    occupancy(grid, bands).bands.iter().map(Occupancy::mean_points_per_cell).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonEmptyCounts {
    pub bands: Vec<usize>,
    pub outside: usize,
    pub total: usize,
}

pub fn nonempty_counts(grid: &SparseVoxelGrid, bands: &DistanceBands) -> NonEmptyCounts {
    let profile = occupancy(grid, bands);
    NonEmptyCounts {
        bands: profile.bands.iter().map(|o| o.nonempty_voxels).collect(),
        outside: profile.outside.nonempty_voxels,
        total: profile.total.nonempty_voxels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveSample {
    pub distance: f64,
    pub bin: usize,
    pub length: f64,
}

/// Receptive length of the bin holding each distance; distances past the
/// last boundary use the last bin.
pub fn receptive_profile(config: &GridConfig, distances: &[f64]) -> Result<Vec<ReceptiveSample>> {
    let boundaries = RadialBoundaries::for_config(config)?;
    distances
        .iter()
        .map(|&distance| {
            if !distance.is_finite() {
                return Err(Error::Config(format!("sample distance {distance} is not finite")));
            }
            let bin = boundaries.bin(distance).unwrap_or(boundaries.bins() - 1);
            Ok(ReceptiveSample { distance, bin, length: receptive_length(&boundaries, bin)? })
        })
        .collect()
}

/// Half-metre offsets `0.5, 1.5, ...` up to `r_max`.
pub fn default_sample_distances(config: &GridConfig) -> Vec<f64> {
    (0..config.r_max.ceil() as usize).map(|n| n as f64 + 0.5).filter(|&d| d < config.r_max).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub misencoded: Option<usize>,
    pub encoding_error: Option<f64>,
    pub nonempty_voxels: usize,
    pub voxel_points: usize,
    pub mean_points_per_nonempty_cell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub points: usize,
    pub misencoded: Option<usize>,
    pub encoding_error: Option<f64>,
    pub nonempty_voxels: usize,
    pub voxel_points: usize,
    pub mean_points_per_nonempty_cell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub scheme: String,
    pub config: GridConfig,
    pub bands: Vec<BandMetrics>,
    pub outside: Summary,
    pub overall: Summary,
    pub dropped_points: usize,
    pub receptive: Vec<ReceptiveSample>,
    /// Cell volume per radial index (m^3).
    pub volumes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisOptions {
    pub exclude_ignore: bool,
    pub threads: Option<usize>,
    /// Receptive-length sample distances; empty means
    /// [`default_sample_distances`].
    pub sample_distances: Vec<f64>,
}

/// Short scheme label such as `api-120`.
pub fn scheme_label(config: &GridConfig) -> String {
    format!("{}-{}", config.scheme.name(), config.n_r)
}

fn summary(points: Option<ErrorTally>, points_fallback: usize, occ: Occupancy) -> Summary {
    Summary {
        points: points.map_or(points_fallback, |t| t.points),
        misencoded: points.map(|t| t.misencoded),
        encoding_error: points.and_then(|t| t.error()),
        nonempty_voxels: occ.nonempty_voxels,
        voxel_points: occ.points,
        mean_points_per_nonempty_cell: occ.mean_points_per_cell(),
    }
}

/// Runs every diagnostic for one configuration. Encoding-error fields are
/// `None` for unlabeled clouds.
pub fn analyze(
    cloud: &PointCloud,
    config: &GridConfig,
    bands: &DistanceBands,
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let filtered;
    let cloud = if options.exclude_ignore && cloud.labels().is_some() {
        filtered = cloud.without_label(IGNORE_LABEL);
        &filtered
    } else {
        cloud
    };
    let voxelizer = Voxelizer::new(config.clone())?.with_threads(options.threads);
    let grid = voxelizer.voxelize(cloud)?;
    let errors = match cloud.labels() {
        Some(_) => Some(encoding_error_for_grid(&grid, cloud, bands)?),
        None => None,
    };
    // unlabeled clouds still report points per band by radius
    let mut counts = vec![0usize; bands.len()];
    let mut outside_points = 0;
    if errors.is_none() {
        for m in 0..cloud.len() {
            if voxelizer.locate_point(cloud, m).is_none() {
                continue;
            }
            match bands.band_of(to_cylindrical(cloud.position(m))?.r) {
                Some(b) => counts[b] += 1,
                None => outside_points += 1,
            }
        }
    }
    let occ = occupancy(&grid, bands);
    let band_metrics = bands
        .ranges()
        .enumerate()
        .map(|(n, (lo, hi))| {
            let s = summary(errors.as_ref().map(|e| e.bands[n]), counts[n], occ.bands[n]);
            BandMetrics {
                lo,
                hi,
                points: s.points,
                misencoded: s.misencoded,
                encoding_error: s.encoding_error,
                nonempty_voxels: s.nonempty_voxels,
                voxel_points: s.voxel_points,
                mean_points_per_nonempty_cell: s.mean_points_per_nonempty_cell,
            }
        })
        .collect();
    let boundaries = grid.boundaries();
    let volumes = (0..boundaries.bins()).map(|i| cell_volume(boundaries, i, 0, 0, config)).collect::<Result<_>>()?;
    let distances = if options.sample_distances.is_empty() {
        default_sample_distances(config)
    } else {
        options.sample_distances.clone()
    };
    Ok(AnalysisReport {
        schema: REPORT_SCHEMA.into(),
        scheme: scheme_label(config),
        config: config.clone(),
        bands: band_metrics,
        outside: summary(errors.as_ref().map(|e| e.outside), outside_points, occ.outside),
        overall: summary(errors.as_ref().map(|e| e.overall), grid.accepted_points(), occ.total),
        dropped_points: grid.dropped_points(),
        receptive: receptive_profile(config, &distances)?,
        volumes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    pub reports: Vec<AnalysisReport>,
    /// Report positions by ascending overall encoding error; unlabeled
    /// reports come last. Ties keep config order.
    pub rank_by_encoding_error: Vec<usize>,
    /// Report positions by ascending non-empty voxel count.
    pub rank_by_nonempty: Vec<usize>,
}

/// Analyzes `cloud` under each config; reports keep config order.
pub fn compare_schemes(
    cloud: &PointCloud,
    configs: &[GridConfig],
    bands: &DistanceBands,
    options: &AnalysisOptions,
) -> Result<ComparisonReport> {
    if configs.is_empty() {
        return Err(Error::Config("compare needs at least one config".into()));
    }
    let reports =
        configs.par_iter().map(|config| analyze(cloud, config, bands, options)).collect::<Result<Vec<_>>>()?;
    let mut by_error: Vec<usize> = (0..reports.len()).collect();
    by_error.sort_by(|&a, &b| {
        let key = |n: usize| reports[n].overall.encoding_error.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    let mut by_count: Vec<usize> = (0..reports.len()).collect();
    by_count.sort_by_key(|&n| reports[n].overall.nonempty_voxels);
    Ok(ComparisonReport {
        schema: REPORT_SCHEMA.into(),
        reports,
        rank_by_encoding_error: by_error,
        rank_by_nonempty: by_count,
    })
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    scheme: &'a str,
    band_lo: f64,
    band_hi: f64,
    points: usize,
    misencoded: Option<usize>,
    encoding_error: Option<f64>,
    nonempty_voxels: usize,
    mean_points_per_nonempty_cell: Option<f64>,
}

/// One CSV row per band per report.
pub fn reports_to_csv<'a>(reports: impl IntoIterator<Item = &'a AnalysisReport>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for report in reports {
        for band in &report.bands {
            writer.serialize(CsvRow {
                scheme: &report.scheme,
                band_lo: band.lo,
                band_hi: band.hi,
                points: band.points,
                misencoded: band.misencoded,
                encoding_error: band.encoding_error,
                nonempty_voxels: band.nonempty_voxels,
                mean_points_per_nonempty_cell: band.mean_points_per_nonempty_cell,
            })?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl ComparisonReport {
    pub fn to_csv(&self) -> Result<String> {
        reports_to_csv(&self.reports)
    }
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean != 0.0).then(|| var.sqrt() / mean)
}

/// Published mean non-empty voxel counts on SemanticKITTI sequence 08 for
/// the default bands: `(label, per band 0-10 .. 40-50 m, total)`.
pub const SEMANTICKITTI_NONEMPTY_REFERENCE: [(&str, [f64; 5], f64); 3] = [
    ("api-120", [9516.8, 6662.4, 2719.8, 1370.2, 745.9], 21015.1),
    ("uniform-120", [7525.2, 6642.1, 2999.3, 1574.1, 873.1], 19613.8),
    ("uniform-480", [15914.6, 11714.4, 4927.3, 2366.7, 1250.0], 36173.1),
];
