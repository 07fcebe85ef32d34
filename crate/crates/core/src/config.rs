//! Grid configuration and its text form.
//!
//! Configurations are stored as TOML:
//!
//! ```toml
//! n_r = 120
//! n_phi = 360
//! n_z = 32
//! z_min = -4.0
//! z_max = 2.0
//! r_max = 50.0
//! scales = 1
//! out_of_range = "clamp"   # or "drop"
//!
//! [scheme]
//! kind = "api"             # uniform | api | gpi | piecewise | increasing-d
//! a0 = 0.05
//! d = 0.0062
//! ```
//!
//! Scheme parameters by kind: `api { a0, d }`, `gpi { a0, ratio }`,
//! `piecewise { region_bounds, region_counts }`,
//! `increasing-d { a0, d, d_prime }`, `uniform {}`. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule that produces the radial interval sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionScheme {
    /// Constant interval `r_max / n_r`.
    Uniform,
    /// Arithmetic progression: `a0 + i * d`.
    Api { a0: f64, d: f64 },
    /// Geometric progression: `a0 * ratio^i`.
    Gpi { a0: f64, ratio: f64 },
    /// Fixed interval per radial region. `region_counts` either sums to
    /// `n_r` or is a ratio that divides it, e.g. `(8, 3, 1)` over 120 bins.
    Piecewise { region_bounds: Vec<f64>, region_counts: Vec<usize> },
    /// Arithmetic progression whose common difference grows by `d_prime`
    /// per index: `a0 + i * d + d_prime * i * (i - 1) / 2`.
    IncreasingD { a0: f64, d: f64, d_prime: f64 },
}

impl PartitionScheme {
    pub const DEFAULT_API: PartitionScheme = PartitionScheme::Api { a0: 0.05, d: 0.0062 };

    pub fn name(&self) -> &'static str {
        match self {
            PartitionScheme::Uniform => "uniform",
            PartitionScheme::Api { .. } => "api",
            PartitionScheme::Gpi { .. } => "gpi",
            PartitionScheme::Piecewise { .. } => "piecewise",
            PartitionScheme::IncreasingD { .. } => "increasing-d",
        }
    }

    /// Default parameters for each kind.
    pub fn default_for(kind: &str) -> Option<PartitionScheme> {
        Some(match kind {
            "uniform" => PartitionScheme::Uniform,
            "api" => PartitionScheme::DEFAULT_API,
            "gpi" => PartitionScheme::Gpi { a0: 0.05, ratio: 1.0541 },
            "piecewise" => {
                PartitionScheme::Piecewise { region_bounds: vec![0.0, 15.0, 30.0, 50.0], region_counts: vec![8, 3, 1] }
            }
            "increasing-d" => PartitionScheme::IncreasingD { a0: 0.05, d: 0.0052, d_prime: 0.000025 },
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0 (got {v})")))
            }
        }
        fn non_negative(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be >= 0 (got {v})")))
            }
        }
        match self {
            PartitionScheme::Uniform => Ok(()),
            PartitionScheme::Api { a0, d } => {
                positive("a0", *a0)?;
                non_negative("d", *d)
            }
            PartitionScheme::Gpi { a0, ratio } => {
                positive("a0", *a0)?;
                if ratio.is_finite() && *ratio > 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("ratio must be > 1 (got {ratio})")))
                }
            }
            PartitionScheme::Piecewise { region_bounds, region_counts } => {
                if region_bounds.len() < 2 {
                    return Err(Error::Config("region_bounds needs at least 2 entries".into()));
                }
                if region_bounds[0] != 0.0 {
                    return Err(Error::Config(format!("region_bounds must start at 0 (got {})", region_bounds[0])));
                }
                if !region_bounds.windows(2).all(|w| w[1].is_finite() && w[1] > w[0]) {
                    return Err(Error::Config("region_bounds must be strictly increasing".into()));
                }
                if region_counts.len() + 1 != region_bounds.len() {
                    return Err(Error::Config(format!(
                        "region_counts has {} entries, expected {} (one per region)",
                        region_counts.len(),
                        region_bounds.len() - 1
                    )));
                }
                if region_counts.contains(&0) {
                    return Err(Error::Config("region_counts must be positive".into()));
                }
                Ok(())
            }
            PartitionScheme::IncreasingD { a0, d, d_prime } => {
                positive("a0", *a0)?;
                non_negative("d", *d)?;
                non_negative("d_prime", *d_prime)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfRangePolicy {
    /// Points past the last radial boundary or outside `[z_min, z_max)`
    /// go to the nearest edge bin.
    #[default]
    Clamp,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_r: usize,
    pub n_phi: usize,
    pub n_z: usize,
    pub z_min: f64,
    pub z_max: f64,
    /// Extent of the uniform scheme and of distance banding. Parametric
    /// schemes are not rescaled to it.
    pub r_max: f64,
    pub scales: u32,
    #[serde(default)]
    pub out_of_range: OutOfRangePolicy,
    pub scheme: PartitionScheme,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_r: 120,
            n_phi: 360,
            n_z: 32,
            z_min: -4.0,
            z_max: 2.0,
            r_max: 50.0,
            scales: 1,
            out_of_range: OutOfRangePolicy::Clamp,
            scheme: PartitionScheme::DEFAULT_API,
        }
    }
}

impl GridConfig {
    pub fn with_scheme(mut self, scheme: PartitionScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_radial_bins(mut self, n_r: usize) -> Self {
        self.n_r = n_r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_r", self.n_r), ("n_phi", self.n_phi), ("n_z", self.n_z)] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.z_min.is_finite() && self.z_max.is_finite() && self.z_min < self.z_max) {
            return Err(Error::Config(format!("z_min must be < z_max (got {} .. {})", self.z_min, self.z_max)));
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(Error::Config(format!("r_max must be > 0 (got {})", self.r_max)));
        }
        if self.scales == 0 {
            return Err(Error::Config("scales must be >= 1".into()));
        }
        if self.scales > 1 {
            if self.scales > 16 {
                return Err(Error::Config(format!("scales must be <= 16 (got {})", self.scales)));
            }
            let step = 1usize << (self.scales - 1);
            for (name, n) in [("n_r", self.n_r), ("n_phi", self.n_phi), ("n_z", self.n_z)] {
                if n % step != 0 {
                    return Err(Error::Config(format!("{name} = {n} is not divisible by 2^(scales-1) = {step}")));
                }
            }
        }
        self.scheme.validate()?;
        if self.scales > 1 && !matches!(self.scheme, PartitionScheme::Api { .. }) {
            return Err(Error::UnsupportedScheme(self.scheme.name()));
        }
        if let PartitionScheme::Piecewise { region_counts, .. } = &self.scheme {
            piecewise_counts(region_counts, self.n_r)?;
        }
        Ok(())
    }

    /// Angular bin width in radians.
    pub fn angular_step(&self) -> f64 {
        std::f64::consts::TAU / self.n_phi as f64
    }

    pub fn height_step(&self) -> f64 {
        (self.z_max - self.z_min) / self.n_z as f64
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: GridConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid config serializes to toml")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// Resolves piecewise region counts against `n_r`: either the counts sum to
/// `n_r` or they are a ratio whose sum divides `n_r`.
pub(crate) fn piecewise_counts(counts: &[usize], n_r: usize) -> Result<Vec<usize>> {
    let total: usize = counts.iter().sum();
    if total == n_r {
        Ok(counts.to_vec())
    } else if total > 0 && n_r.is_multiple_of(total) {
        let scale = n_r / total;
        Ok(counts.iter().map(|c| c * scale).collect())
    } else {
        Err(Error::Config(format!("region_counts sum to {total}, which neither equals nor divides n_r = {n_r}")))
    }
}
