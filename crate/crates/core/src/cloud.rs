use crate::error::{Error, Result};
use crate::geometry::CartesianPoint;

/// Class id of unlabeled points in SemanticKITTI.
pub const IGNORE_LABEL: u16 = 0;

/// Points with per-point feature channels and optional semantic labels.
///
/// Features are stored row-major, `channels` values per point. Clouds read
/// from scans carry `(x, y, z, intensity)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    positions: Vec<[f32; 3]>,
    features: Vec<f32>,
    channels: usize,
    labels: Option<Vec<u16>>,
}

impl PointCloud {
    pub fn new(positions: Vec<[f32; 3]>, features: Vec<f32>, channels: usize) -> Result<Self> {
        if features.len() != positions.len() * channels {
            return Err(Error::Config(format!(
                "feature buffer holds {} values, expected {} points x {} channels",
                features.len(),
                positions.len(),
                channels
            )));
        }
        if let Some(p) = positions.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::RejectedPoint { x: p[0] as f64, y: p[1] as f64, z: p[2] as f64 });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("feature values must be finite".into()));
        }
        Ok(PointCloud { positions, features, channels, labels: None })
    }

    /// Cloud whose features are the raw `(x, y, z, intensity)` records.
    pub fn from_xyzi(records: &[[f32; 4]]) -> Result<Self> {
        let positions = records.iter().map(|r| [r[0], r[1], r[2]]).collect();
        let features = records.iter().flatten().copied().collect();
        Self::new(positions, features, 4)
    }

    pub fn with_labels(mut self, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LabelCount { expected: self.len(), found: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn position(&self, m: usize) -> CartesianPoint {
        let [x, y, z] = self.positions[m];
        CartesianPoint::new(x as f64, y as f64, z as f64)
    }

    pub fn feature(&self, m: usize) -> &[f32] {
        &self.features[m * self.channels..(m + 1) * self.channels]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    /// Keeps the points for which `keep(m)` holds, preserving order.
    pub fn retain_points(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let kept: Vec<usize> = (0..self.len()).filter(|&m| keep(m)).collect();
        PointCloud {
            positions: kept.iter().map(|&m| self.positions[m]).collect(),
            features: kept.iter().flat_map(|&m| self.feature(m).iter().copied()).collect(),
            channels: self.channels,
            labels: self.labels.as_ref().map(|l| kept.iter().map(|&m| l[m]).collect()),
        }
    }

    /// Drops every point carrying `label`.
    pub fn without_label(&self, label: u16) -> PointCloud {
        match &self.labels {
            Some(labels) => self.retain_points(|m| labels[m] != label),
            None => self.clone(),
        }
    }

    /// Same points with labels replaced.
    pub fn relabeled(&self, labels: Vec<u16>) -> Result<PointCloud> {
        self.clone().with_labels(labels)
    }
}
