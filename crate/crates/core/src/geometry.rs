//! Cylindrical coordinates, radial partitions and cell geometry.
//!
//! A radial partition is described by its boundaries `b[0] = 0 < b[1] < ...
//! < b[n_r]`; bin `i` covers `[b[i], b[i+1])`. Boundaries of the uniform
//! scheme end at `r_max`, parametric schemes end wherever their parameters
//! put them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{piecewise_counts, GridConfig, OutOfRangePolicy, PartitionScheme};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        CartesianPoint { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylindricalPoint {
    pub r: f64,
    /// Azimuth in `[-pi, pi)`.
    pub phi: f64,
    pub z: f64,
}

/// Converts to `(r, phi, z)`. `phi = pi` folds onto `-pi` and the origin
/// gets `phi = 0`.
pub fn to_cylindrical(p: CartesianPoint) -> Result<CylindricalPoint> {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(Error::RejectedPoint { x: p.x, y: p.y, z: p.z });
    }
    let r = p.x.hypot(p.y);
    let phi = if r == 0.0 {
        0.0
    } else {
        let phi = p.y.atan2(p.x) + 0.0;
        if phi >= PI {
            -PI
        } else {
            phi
        }
    };
    Ok(CylindricalPoint { r, phi, z: p.z })
}

/// Radial interval of bin `i` under `scheme` for an `n_r`-bin partition.
/// `r_max` is only consulted by the uniform scheme.
pub fn radial_interval(scheme: &PartitionScheme, i: usize, n_r: usize, r_max: f64) -> Result<f64> {
    if i >= n_r {
        return Err(Error::IndexOutOfRange { what: "radial", index: i, len: n_r });
    }
    Ok(radial_intervals(scheme, n_r, r_max)?[i])
}

/// All `n_r` radial intervals of a scheme.
pub fn radial_intervals(scheme: &PartitionScheme, n_r: usize, r_max: f64) -> Result<Vec<f64>> {
    scheme.validate()?;
    let fi = |i: usize| i as f64;
    Ok(match scheme {
        PartitionScheme::Uniform => vec![r_max / n_r as f64; n_r],
        PartitionScheme::Api { a0, d } => (0..n_r).map(|i| a0 + fi(i) * d).collect(),
        PartitionScheme::Gpi { a0, ratio } => (0..n_r).map(|i| a0 * ratio.powi(i as i32)).collect(),
        PartitionScheme::Piecewise { region_bounds, region_counts } => {
            let counts = piecewise_counts(region_counts, n_r)?;
            let mut out = Vec::with_capacity(n_r);
            for (w, &count) in region_bounds.windows(2).zip(&counts) {
                let step = (w[1] - w[0]) / count as f64;
                out.extend(std::iter::repeat_n(step, count));
            }
            out
        }
        PartitionScheme::IncreasingD { a0, d, d_prime } => {
            (0..n_r).map(|i| a0 + fi(i) * d + d_prime * triangular(i as u64) as f64).collect()
        }
    })
}

/// `n (n - 1) / 2`
fn triangular(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// `n (n - 1) (n - 2) / 6`
fn tetrahedral(n: u64) -> u64 {
    n * n.saturating_sub(1) * n.saturating_sub(2) / 6
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lookup {
    /// Arithmetic intervals `first + i * step`; the bin is found by
    /// inverting the quadratic partial sum.
    Arithmetic {
        first: f64,
        step: f64,
    },
    Search,
}

/// Immutable radial boundary sequence with bin lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBoundaries {
    edges: Vec<f64>,
    lookup: Lookup,
}

impl RadialBoundaries {
    pub fn new(scheme: &PartitionScheme, n_r: usize, r_max: f64) -> Result<Self> {
        if n_r == 0 {
            return Err(Error::Config("n_r must be >= 1".into()));
        }
        if matches!(scheme, PartitionScheme::Uniform) && !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::Config(format!("r_max must be > 0 (got {r_max})")));
        }
        scheme.validate()?;
        let n = n_r as u64;
        let mut lookup = Lookup::Search;
        let edges: Vec<f64> = match scheme {
            PartitionScheme::Uniform => (0..=n_r).map(|i| r_max * (i as f64 / n_r as f64)).collect(),
            PartitionScheme::Api { a0, d } => {
                lookup = Lookup::Arithmetic { first: *a0, step: *d };
                (0..=n).map(|m| m as f64 * a0 + triangular(m) as f64 * d).collect()
            }
            PartitionScheme::IncreasingD { a0, d, d_prime } => {
                (0..=n).map(|m| m as f64 * a0 + triangular(m) as f64 * d + tetrahedral(m) as f64 * d_prime).collect()
            }
            PartitionScheme::Gpi { .. } => {
                let intervals = radial_intervals(scheme, n_r, r_max)?;
                std::iter::once(0.0)
                    .chain(intervals.iter().scan(0.0, |acc, a| {
                        *acc += a;
                        Some(*acc)
                    }))
                    .collect()
            }
            PartitionScheme::Piecewise { region_bounds, region_counts } => {
                let counts = piecewise_counts(region_counts, n_r)?;
                let mut edges = vec![0.0];
                for (w, &count) in region_bounds.windows(2).zip(&counts) {
                    let extent = w[1] - w[0];
                    edges.extend((1..=count).map(|k| w[0] + extent * (k as f64 / count as f64)));
                }
                edges
            }
        };
        Self::from_edges_with(edges, lookup)
    }

    /// Boundaries of a validated config.
    pub fn for_config(config: &GridConfig) -> Result<Self> {
        config.validate()?;
        Self::new(&config.scheme, config.n_r, config.r_max)
    }

    /// Wraps an explicit boundary sequence (`edges[0] = 0`, strictly
    /// increasing, at least two entries).
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        Self::from_edges_with(edges, Lookup::Search)
    }

    fn from_edges_with(edges: Vec<f64>, lookup: Lookup) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 {
            return Err(Error::Config("radial boundaries need >= 2 entries starting at 0".into()));
        }
        if !edges.windows(2).all(|w| w[1].is_finite() && w[1] > w[0]) {
            return Err(Error::Config("radial boundaries must be strictly increasing".into()));
        }
        Ok(RadialBoundaries { edges, lookup })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn outer(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn extent(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Bin containing `r`, or `None` when `r >= outer()`. Negative radii map
    /// to bin 0.
    pub fn bin(&self, r: f64) -> Option<usize> {
        if r.is_nan() || r >= self.outer() {
            return None;
        }
        if r <= 0.0 {
            return Some(0);
        }
        let last = self.bins() - 1;
        let guess = match self.lookup {
            Lookup::Arithmetic { first, step } => {
                // m*first + step*m(m-1)/2 = r
                let n = if step == 0.0 {
                    r / first
                } else {
                    let b = first - 0.5 * step;
                    (-b + (b * b + 2.0 * step * r).sqrt()) / step
                };
                (n.max(0.0) as usize).min(last)
            }
            Lookup::Search => return Some(self.edges.partition_point(|&e| e <= r) - 1),
        };
        // Settle rounding so the stored edges stay authoritative.
        let mut i = guess;
        while i > 0 && self.edges[i] > r {
            i -= 1;
        }
        while i < last && self.edges[i + 1] <= r {
            i += 1;
        }
        Some(i)
    }

    /// Bin lookup honoring the out-of-range policy.
    pub fn locate(&self, r: f64, policy: OutOfRangePolicy) -> Option<usize> {
        match (self.bin(r), policy) {
            (Some(i), _) => Some(i),
            (None, OutOfRangePolicy::Clamp) if !r.is_nan() => Some(self.bins() - 1),
            (None, _) => None,
        }
    }

    /// Every `step`-th boundary, i.e. the partition obtained by merging
    /// `step` consecutive bins.
    pub fn coarsen(&self, step: usize) -> Result<Self> {
        if step == 0 || !self.bins().is_multiple_of(step) {
            return Err(Error::Config(format!("{} radial bins cannot be merged in groups of {step}", self.bins())));
        }
        let edges = self.edges.iter().step_by(step).copied().collect();
        Self::from_edges(edges)
    }
}

/// Boundaries for a validated grid configuration.
pub fn build_boundaries(config: &GridConfig) -> Result<RadialBoundaries> {
    RadialBoundaries::for_config(config)
}

/// Bin lookup honoring `policy`; `None` is the out-of-range signal.
pub fn radial_index(boundaries: &RadialBoundaries, r: f64, policy: OutOfRangePolicy) -> Option<usize> {
    boundaries.locate(r, policy)
}

/// Exact volume of cell `(i, j, k)`:
/// `(h * b / 2) * (b[i+1]^2 - b[i]^2)` with `b = 2pi / n_phi`, `h = (z_max - z_min) / n_z`.
pub fn cell_volume(boundaries: &RadialBoundaries, i: usize, j: usize, k: usize, config: &GridConfig) -> Result<f64> {
    for (what, index, len) in
        [("radial", i, boundaries.bins()), ("angular", j, config.n_phi), ("height", k, config.n_z)]
    {
        if index >= len {
            return Err(Error::IndexOutOfRange { what, index, len });
        }
    }
    let (lo, hi) = (boundaries.edges[i], boundaries.edges[i + 1]);
    Ok(0.5 * config.height_step() * config.angular_step() * (hi * hi - lo * lo))
}

/// Radial span of bins `i-1..=i+1`, truncated at the grid edges.
pub fn receptive_length(boundaries: &RadialBoundaries, i: usize) -> Result<f64> {
    let n = boundaries.bins();
    if i >= n {
        return Err(Error::IndexOutOfRange { what: "radial", index: i, len: n });
    }
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(n - 1);
    Ok((lo..=hi).map(|b| boundaries.extent(b)).sum())
}

/// Radial interval of bin `i` at aggregation scale `s`:
/// `2^s a0 + (2^(2s) i + 2^(2s-1) - 2^(s-1)) d`. Only defined for the api
/// scheme; scale 0 is the plain progression.
pub fn multiscale_interval(scheme: &PartitionScheme, s: u32, i: usize) -> Result<f64> {
    let (first, step) = scale_progression(scheme, s)?;
    Ok(first + i as f64 * step)
}

/// First term and common difference of the scale-`s` progression.
fn scale_progression(scheme: &PartitionScheme, s: u32) -> Result<(f64, f64)> {
    let PartitionScheme::Api { a0, d } = scheme else {
        return Err(Error::UnsupportedScheme(scheme.name()));
    };
    if s > 20 {
        return Err(Error::Config(format!("scale {s} is too large")));
    }
    let p = (1u64 << s) as f64;
    // 2^(2s-1) - 2^(s-1) written as p(p-1)/2 so s = 0 needs no special case
    let offset = p * (p - 1.0) / 2.0;
    Ok((p * a0 + offset * d, p * p * d))
}

/// Boundaries of the scale-`s` partition built from scale-`s` intervals.
/// Coincides exactly with every `2^s`-th scale-0 boundary.
pub fn multiscale_boundaries(scheme: &PartitionScheme, n_r: usize, s: u32) -> Result<RadialBoundaries> {
    let (first, step) = scale_progression(scheme, s)?;
    let PartitionScheme::Api { a0, d } = scheme else {
        unreachable!("scale_progression accepts only api");
    };
    let group = 1usize << s;
    if n_r == 0 || !n_r.is_multiple_of(group) {
        return Err(Error::Config(format!("n_r = {n_r} is not divisible by 2^{s} = {group}")));
    }
    let p = group as u64;
    let bins = (n_r / group) as u64;
    // Partial sum of m scale-s intervals: m*2^s*a0 + d*(2^(2s) m(m-1)/2 + m(2^(2s-1) - 2^(s-1))).
    let edges = (0..=bins)
        .map(|m| {
            let coeff = p * p * triangular(m) + m * triangular(p);
            (m * p) as f64 * a0 + coeff as f64 * d
        })
        .collect();
    RadialBoundaries::from_edges_with(edges, Lookup::Arithmetic { first, step })
}
