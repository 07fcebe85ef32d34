//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the library's lookup or aggregation paths.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nucvox::{GridConfig, OutOfRangePolicy, PointCloud};

/// First bin whose half-open range holds `r`, scanning every boundary.
pub fn scan_bin(edges: &[f64], r: f64) -> Option<usize> {
    (0..edges.len() - 1).find(|&i| edges[i] <= r && r < edges[i + 1])
}

/// Voxel of point `m` by direct arithmetic; `None` when dropped.
pub fn brute_index(cloud: &PointCloud, m: usize, config: &GridConfig, edges: &[f64]) -> Option<(usize, usize, usize)> {
    let p = cloud.positions()[m];
    let (x, y, z) = (p[0] as f64, p[1] as f64, p[2] as f64);
    let r = (x * x + y * y).sqrt();
    let n_r = edges.len() - 1;
    let i = match scan_bin(edges, r) {
        Some(i) => i,
        None if config.out_of_range == OutOfRangePolicy::Clamp => n_r - 1,
        None => return None,
    };
    let mut phi = if r == 0.0 { 0.0 } else { y.atan2(x) };
    if phi >= PI {
        phi = -PI;
    }
    let j = (((phi + PI) / (2.0 * PI) * config.n_phi as f64) as usize).min(config.n_phi - 1);
    let t = (z - config.z_min) / (config.z_max - config.z_min);
    let k = if (0.0..1.0).contains(&t) {
        ((t * config.n_z as f64) as usize).min(config.n_z - 1)
    } else if config.out_of_range == OutOfRangePolicy::Drop {
        return None;
    } else if t < 0.0 {
        0
    } else {
        config.n_z - 1
    };
    Some((i, j, k))
}

/// Member point ids per voxel.
pub fn brute_groups(
    cloud: &PointCloud,
    config: &GridConfig,
    edges: &[f64],
) -> BTreeMap<(usize, usize, usize), Vec<usize>> {
    let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for m in 0..cloud.len() {
        if let Some(key) = brute_index(cloud, m, config, edges) {
            groups.entry(key).or_default().push(m);
        }
    }
    groups
}

/// Most frequent label, smallest id on ties.
pub fn mode(labels: impl IntoIterator<Item = u16>) -> u16 {
    let mut hist: BTreeMap<u16, usize> = BTreeMap::new();
    for l in labels {
        *hist.entry(l).or_default() += 1;
    }
    let best = *hist.values().max().expect("non-empty voxel");
    *hist.iter().find(|(_, &c)| c == best).unwrap().0
}

/// Misencoded and total points with radius in `[lo, hi)` by per-voxel mode.
pub fn brute_encoding_error(
    cloud: &PointCloud,
    config: &GridConfig,
    edges: &[f64],
    lo: f64,
    hi: f64,
) -> (usize, usize) {
    let labels = cloud.labels().expect("labeled cloud");
    let (mut wrong, mut total) = (0, 0);
    for members in brute_groups(cloud, config, edges).values() {
        let majority = mode(members.iter().map(|&m| labels[m]));
        for &m in members {
            let p = cloud.positions()[m];
            let r = (p[0] as f64).hypot(p[1] as f64);
            if lo <= r && r < hi {
                total += 1;
                wrong += (labels[m] != majority) as usize;
            }
        }
    }
    (wrong, total)
}
