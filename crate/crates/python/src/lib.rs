//! Python module `nucvox`.
//!
//! Configurations, clouds and grids are wrapped as classes; reports come back
//! as plain dicts.

use std::path::PathBuf;

use nucvox_core::analysis::{self, AnalysisOptions};
use nucvox_core::io::{self as nio, RadialProfile, SynthesisSpec};
use nucvox_core::{self as core, DistanceBands, Error, OutOfRangePolicy, PartitionScheme};
use pyo3::exceptions::{PyFileNotFoundError, PyIndexError, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| to_py(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn bands(edges: Option<Vec<f64>>) -> PyResult<DistanceBands> {
    match edges {
        Some(edges) => DistanceBands::new(edges).map_err(to_py),
        None => Ok(DistanceBands::default()),
    }
}

/// Grid resolution, bounds and radial partition scheme.
#[pyclass(name = "GridConfig", module = "nucvox", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyGridConfig {
    inner: core::GridConfig,
}

#[pymethods]
impl PyGridConfig {
    /// Scheme parameters left as None take the kind's defaults.
    #[new]
    #[pyo3(signature = (
        scheme = "api", *, a0 = None, d = None, ratio = None, d_prime = None,
        region_bounds = None, region_counts = None, n_r = 120, n_phi = 360, n_z = 32,
        z_min = -4.0, z_max = 2.0, r_max = 50.0, scales = 1, out_of_range = "clamp"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        scheme: &str,
        a0: Option<f64>,
        d: Option<f64>,
        ratio: Option<f64>,
        d_prime: Option<f64>,
        region_bounds: Option<Vec<f64>>,
        region_counts: Option<Vec<usize>>,
        n_r: usize,
        n_phi: usize,
        n_z: usize,
        z_min: f64,
        z_max: f64,
        r_max: f64,
        scales: u32,
        out_of_range: &str,
    ) -> PyResult<Self> {
        let mut kind = PartitionScheme::default_for(scheme)
            .ok_or_else(|| PyValueError::new_err(format!("unknown scheme '{scheme}'")))?;
        let mut unused = Vec::new();
        {
            let mut take = |slot: Option<&mut f64>, value: Option<f64>, name: &'static str| match (slot, value) {
                (Some(slot), Some(v)) => *slot = v,
                (None, Some(_)) => unused.push(name),
                _ => {}
            };
            let (sa0, sd, sratio, sdp) = match &mut kind {
                PartitionScheme::Uniform | PartitionScheme::Piecewise { .. } => (None, None, None, None),
                PartitionScheme::Api { a0, d } => (Some(a0), Some(d), None, None),
                PartitionScheme::Gpi { a0, ratio } => (Some(a0), None, Some(ratio), None),
                PartitionScheme::IncreasingD { a0, d, d_prime } => (Some(a0), Some(d), None, Some(d_prime)),
            };
            take(sa0, a0, "a0");
            take(sd, d, "d");
            take(sratio, ratio, "ratio");
            take(sdp, d_prime, "d_prime");
        }
        match &mut kind {
            PartitionScheme::Piecewise { region_bounds: bounds, region_counts: counts } => {
                if let Some(b) = region_bounds {
                    *bounds = b;
                }
                if let Some(c) = region_counts {
                    *counts = c;
                }
            }
            _ => {
                if region_bounds.is_some() {
                    unused.push("region_bounds");
                }
                if region_counts.is_some() {
                    unused.push("region_counts");
                }
            }
        }
        if let Some(name) = unused.first() {
            return Err(PyValueError::new_err(format!("{name} does not apply to the {scheme} scheme")));
        }
        let out_of_range = match out_of_range {
            "clamp" => OutOfRangePolicy::Clamp,
            "drop" => OutOfRangePolicy::Drop,
            other => {
                return Err(PyValueError::new_err(format!("out_of_range must be 'clamp' or 'drop', got '{other}'")))
            }
        };
        let inner = core::GridConfig { n_r, n_phi, n_z, z_min, z_max, r_max, scales, out_of_range, scheme: kind };
        inner.validate().map_err(to_py)?;
        Ok(PyGridConfig { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyGridConfig { inner: core::GridConfig::from_toml_str(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyGridConfig { inner: nio::load_config(path).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        nio::save_config(path, &self.inner).map_err(to_py)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }

    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.scheme.name()
    }

    #[getter]
    fn label(&self) -> String {
        analysis::scheme_label(&self.inner)
    }

    #[getter]
    fn n_r(&self) -> usize {
        self.inner.n_r
    }

    #[getter]
    fn n_phi(&self) -> usize {
        self.inner.n_phi
    }

    #[getter]
    fn n_z(&self) -> usize {
        self.inner.n_z
    }

    #[getter]
    fn scales(&self) -> u32 {
        self.inner.scales
    }

    /// The `n_r + 1` radial bin edges.
    fn boundaries(&self) -> PyResult<Vec<f64>> {
        Ok(core::build_boundaries(&self.inner).map_err(to_py)?.edges().to_vec())
    }

    /// Radial bin of distance `r` under the config's out-of-range policy;
    /// None when dropped.
    fn radial_index(&self, r: f64) -> PyResult<Option<usize>> {
        let boundaries = core::build_boundaries(&self.inner).map_err(to_py)?;
        Ok(core::radial_index(&boundaries, r, self.inner.out_of_range))
    }

    fn cell_volume(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let boundaries = core::build_boundaries(&self.inner).map_err(to_py)?;
        core::cell_volume(&boundaries, i, j, k, &self.inner).map_err(to_py)
    }

    fn receptive_length(&self, i: usize) -> PyResult<f64> {
        let boundaries = core::build_boundaries(&self.inner).map_err(to_py)?;
        core::receptive_length(&boundaries, i).map_err(to_py)
    }

    /// Radial edges of scale `s` of the multi-scale pyramid (api only).
    fn multiscale_boundaries(&self, s: u32) -> PyResult<Vec<f64>> {
        let b = core::multiscale_boundaries(&self.inner.scheme, self.inner.n_r, s).map_err(to_py)?;
        Ok(b.edges().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "GridConfig({}, n_r={}, n_phi={}, n_z={}, scales={})",
            self.label(),
            self.inner.n_r,
            self.inner.n_phi,
            self.inner.n_z,
            self.inner.scales
        )
    }
}

/// Points with feature channels and optional semantic labels.
#[pyclass(name = "PointCloud", module = "nucvox", frozen)]
struct PyPointCloud {
    inner: core::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    /// `records` holds `(x, y, z, intensity)` rows.
    #[new]
    #[pyo3(signature = (records, labels = None))]
    fn new(records: Vec<[f32; 4]>, labels: Option<Vec<u16>>) -> PyResult<Self> {
        let mut cloud = core::PointCloud::from_xyzi(&records).map_err(to_py)?;
        if let Some(labels) = labels {
            cloud = cloud.with_labels(labels).map_err(to_py)?;
        }
        Ok(PyPointCloud { inner: cloud })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    fn positions(&self) -> Vec<[f32; 3]> {
        self.inner.positions().to_vec()
    }

    fn features(&self) -> Vec<Vec<f32>> {
        (0..self.inner.len()).map(|m| self.inner.feature(m).to_vec()).collect()
    }

    fn labels(&self) -> Option<Vec<u16>> {
        self.inner.labels().map(<[u16]>::to_vec)
    }

    /// Writes KITTI `.bin` records and, when labeled, a `.label` file.
    #[pyo3(signature = (path, labels_path = None))]
    fn save(&self, path: PathBuf, labels_path: Option<PathBuf>) -> PyResult<()> {
        nio::write_scan(&path, &self.inner).map_err(to_py)?;
        if let (Some(labels), Some(path)) = (self.inner.labels(), labels_path) {
            nio::write_labels(path, labels).map_err(to_py)?;
        }
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("PointCloud({} points, labeled={})", self.inner.len(), self.inner.labels().is_some())
    }
}

/// `(i, j, k, point_count, label, feature)`.
type VoxelRecord = (u32, u32, u32, u32, Option<u16>, Vec<f32>);

/// Sparse cylindrical voxel grid.
#[pyclass(name = "VoxelGrid", module = "nucvox", frozen)]
struct PyVoxelGrid {
    inner: core::SparseVoxelGrid,
}

#[pymethods]
impl PyVoxelGrid {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyVoxelGrid { inner: nio::load_grid(path).map_err(to_py)? })
    }

    /// JSON, or binary when the path ends in `.nucvox`.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        nio::save_grid(path, &self.inner).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        nio::grid_to_json(&self.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn config(&self) -> PyGridConfig {
        PyGridConfig { inner: self.inner.config().clone() }
    }

    #[getter]
    fn accepted_points(&self) -> usize {
        self.inner.accepted_points()
    }

    #[getter]
    fn dropped_points(&self) -> usize {
        self.inner.dropped_points()
    }

    /// Voxels of scale `scale`, sorted by index.
    #[pyo3(signature = (scale = 0))]
    fn voxels(&self, scale: usize) -> PyResult<Vec<VoxelRecord>> {
        let level = self.inner.levels().get(scale).ok_or_else(|| PyIndexError::new_err(format!("no scale {scale}")))?;
        Ok(level
            .voxels()
            .iter()
            .map(|v| (v.index.i, v.index.j, v.index.k, v.point_count, v.label, v.feature.clone()))
            .collect())
    }

    /// Multi-scale feature of the voxel at `(i, j, k)`: its own feature
    /// followed by each coarser parent's.
    fn concat_feature(&self, i: u32, j: u32, k: u32) -> Option<Vec<f32>> {
        self.inner.concat_feature(core::VoxelIndex::new(i, j, k))
    }

    /// Majority label of each point's voxel, in point order.
    fn decode_labels(&self, cloud: &PyPointCloud) -> PyResult<Vec<Option<u16>>> {
        core::decode_labels(&self.inner, &cloud.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "VoxelGrid({} voxels, {} scales, {})",
            self.inner.len(),
            self.inner.levels().len(),
            analysis::scheme_label(self.inner.config())
        )
    }
}

#[pyfunction]
#[pyo3(signature = (path, labels = None))]
fn read_scan(path: PathBuf, labels: Option<PathBuf>) -> PyResult<PyPointCloud> {
    let scan = nio::read_labeled_scan(path, labels.as_deref()).map_err(to_py)?;
    Ok(PyPointCloud { inner: scan.cloud })
}

/// Labeled synthetic scene; defaults reproduce the reference scene.
#[pyfunction]
#[pyo3(signature = (seed = 7, *, beams = 64, azimuth = 2048, min_range = 1.0, max_range = 50.0, dropout = 0.2, profile = "inverse-square"))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    py: Python<'_>,
    seed: u64,
    beams: usize,
    azimuth: usize,
    min_range: f64,
    max_range: f64,
    dropout: f64,
    profile: &str,
) -> PyResult<PyPointCloud> {
    let profile = match profile {
        "inverse-square" => RadialProfile::InverseSquare,
        "uniform-area" => RadialProfile::UniformArea,
        other => return Err(PyValueError::new_err(format!("unknown profile '{other}'"))),
    };
    let spec = SynthesisSpec {
        beam_count: beams,
        azimuth_samples: azimuth,
        min_range,
        max_range,
        dropout,
        profile,
        seed,
        ..SynthesisSpec::default()
    };
    let cloud = py.detach(|| nio::generate_synthetic(&spec)).map_err(to_py)?;
    Ok(PyPointCloud { inner: cloud })
}

#[pyfunction]
#[pyo3(signature = (cloud, config = None, threads = None))]
fn voxelize(
    py: Python<'_>,
    cloud: &PyPointCloud,
    config: Option<&PyGridConfig>,
    threads: Option<usize>,
) -> PyResult<PyVoxelGrid> {
    let config = config.map_or_else(core::GridConfig::default, |c| c.inner.clone());
    let grid =
        py.detach(|| core::Voxelizer::new(config)?.with_threads(threads).voxelize(&cloud.inner)).map_err(to_py)?;
    Ok(PyVoxelGrid { inner: grid })
}

/// Per-band encoding error of a labeled cloud.
#[pyfunction]
#[pyo3(signature = (cloud, config = None, bands = None, exclude_ignore = false))]
fn encoding_error<'py>(
    py: Python<'py>,
    cloud: &PyPointCloud,
    config: Option<&PyGridConfig>,
    bands: Option<Vec<f64>>,
    exclude_ignore: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let config = config.map_or_else(core::GridConfig::default, |c| c.inner.clone());
    let bands = self::bands(bands)?;
    let report =
        py.detach(|| analysis::encoding_error(&cloud.inner, &config, &bands, exclude_ignore)).map_err(to_py)?;
    to_dict(py, &report)
}

/// Full diagnostic report for one configuration.
#[pyfunction]
#[pyo3(signature = (cloud, config = None, bands = None, exclude_ignore = false, threads = None))]
fn analyze<'py>(
    py: Python<'py>,
    cloud: &PyPointCloud,
    config: Option<&PyGridConfig>,
    bands: Option<Vec<f64>>,
    exclude_ignore: bool,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = config.map_or_else(core::GridConfig::default, |c| c.inner.clone());
    let bands = self::bands(bands)?;
    let options = AnalysisOptions { exclude_ignore, threads, ..AnalysisOptions::default() };
    let report = py.detach(|| analysis::analyze(&cloud.inner, &config, &bands, &options)).map_err(to_py)?;
    to_dict(py, &report)
}

/// Reports for several configurations, in the given order, plus rankings.
/// With `csv=True` the one-row-per-band table is returned instead.
#[pyfunction]
#[pyo3(signature = (cloud, configs, bands = None, exclude_ignore = false, csv = false))]
fn compare_schemes<'py>(
    py: Python<'py>,
    cloud: &PyPointCloud,
    configs: Vec<PyRef<'py, PyGridConfig>>,
    bands: Option<Vec<f64>>,
    exclude_ignore: bool,
    csv: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let configs: Vec<core::GridConfig> = configs.iter().map(|c| c.inner.clone()).collect();
    let bands = self::bands(bands)?;
    let options = AnalysisOptions { exclude_ignore, ..AnalysisOptions::default() };
    let report = py.detach(|| analysis::compare_schemes(&cloud.inner, &configs, &bands, &options)).map_err(to_py)?;
    if csv {
        Ok(report.to_csv().map_err(to_py)?.into_pyobject(py)?.into_any())
    } else {
        to_dict(py, &report)
    }
}

/// Width of radial bin `i` at scale `s` of the api pyramid.
#[pyfunction]
#[pyo3(signature = (s, i, a0 = 0.05, d = 0.0062))]
fn multiscale_interval(s: u32, i: usize, a0: f64, d: f64) -> PyResult<f64> {
    core::multiscale_interval(&PartitionScheme::Api { a0, d }, s, i).map_err(to_py)
}

#[pymodule]
fn nucvox(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridConfig>()?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyVoxelGrid>()?;
    m.add_function(wrap_pyfunction!(read_scan, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(voxelize, m)?)?;
    m.add_function(wrap_pyfunction!(encoding_error, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(compare_schemes, m)?)?;
    m.add_function(wrap_pyfunction!(multiscale_interval, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
