//! Deterministic synthetic LiDAR scans.
//!
//! Each of `beam_count` beams sweeps `azimuth_samples` jittered azimuths.
//! Beams split the range `[min_range, max_range]` into equal slices of the
//! radial profile: under [`RadialProfile::InverseSquare`] the slices are
//! equal in log-range, so ground-plane area density falls off as `1/r^2`;
//! under [`RadialProfile::UniformArea`] they are equal in `r^2` and the
//! density is constant. Each point is then dropped with probability
//! `dropout * r / max_range`. Classes are assigned by annulus.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialProfile {
    InverseSquare,
    UniformArea,
}

/// Ring `[inner, next inner)` labeled `class`, with points spread over
/// `height` metres above the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub inner: f64,
    pub class: u16,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    /// Zero beams (or zero azimuth samples) yields an empty cloud.
    pub beam_count: usize,
    pub azimuth_samples: usize,
    pub min_range: f64,
    pub max_range: f64,
    pub profile: RadialProfile,
    /// Ground lies at `z = -sensor_height`.
    pub sensor_height: f64,
    /// Sorted by `inner`; the first starts at 0.
    pub annuli: Vec<Annulus>,
    /// Drop probability at `max_range`.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for SynthesisSpec {
    /// The two-class reference scene: 64 beams x 2048 azimuths over 1-50 m,
    /// `1/r^2` density, alternating ground (class 1, 0.2 m tall) and
    /// vegetation (class 2, 2 m tall) rings whose edges avoid the uniform
    /// 120-bin boundaries.
    fn default() -> Self {
        let edges = [0.0, 2.3, 4.7, 7.1, 9.6, 13.3, 17.9, 24.2, 31.7, 41.3];
        let annuli = edges
            .iter()
            .enumerate()
            .map(|(n, &inner)| {
                if n % 2 == 0 {
                    Annulus { inner, class: 1, height: 0.2 }
                } else {
                    Annulus { inner, class: 2, height: 2.0 }
                }
            })
            .collect();
        SynthesisSpec {
            beam_count: 64,
            azimuth_samples: 2048,
            min_range: 1.0,
            max_range: 50.0,
            profile: RadialProfile::InverseSquare,
            sensor_height: 1.73,
            annuli,
            dropout: 0.2,
            seed: 7,
        }
    }
}

impl SynthesisSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.min_range >= 0.0 && self.max_range.is_finite() && self.max_range > self.min_range) {
            return bad(format!("need 0 <= min_range < max_range (got {} .. {})", self.min_range, self.max_range));
        }
        if self.profile == RadialProfile::InverseSquare && self.min_range <= 0.0 {
            return bad("inverse-square profile needs min_range > 0".into());
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1] (got {})", self.dropout));
        }
        if !self.sensor_height.is_finite() {
            return bad("sensor_height must be finite".into());
        }
        match self.annuli.first() {
            Some(a) if a.inner == 0.0 => {}
            _ => return bad("annuli must start at inner = 0".into()),
        }
        if !self.annuli.windows(2).all(|w| w[1].inner > w[0].inner) {
            return bad("annuli must be sorted by strictly increasing inner radius".into());
        }
        if self.annuli.iter().any(|a| !(a.height.is_finite() && a.height >= 0.0)) {
            return bad("annulus heights must be finite and >= 0".into());
        }
        Ok(())
    }

    fn annulus(&self, r: f64) -> &Annulus {
        let n = self.annuli.partition_point(|a| a.inner <= r);
        &self.annuli[n.saturating_sub(1)]
    }

    fn range_at(&self, u: f64) -> f64 {
        let (lo, hi) = (self.min_range, self.max_range);
        let r = match self.profile {
            RadialProfile::InverseSquare => lo * (hi / lo).powf(u),
            RadialProfile::UniformArea => (lo * lo + u * (hi * hi - lo * lo)).sqrt(),
        };
        r.min(hi)
    }
}

/// Generates the labeled cloud described by `spec`. Features are
/// `(x, y, z, intensity)`.
pub fn generate_synthetic(spec: &SynthesisSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.beam_count * spec.azimuth_samples;
    let mut records = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for beam in 0..spec.beam_count {
        for step in 0..spec.azimuth_samples {
            // fixed draw count per sample keeps the stream aligned
            let [jitter_r, jitter_phi, lift, shade, keep]: [f64; 5] = rng.gen();
            let r = spec.range_at((beam as f64 + jitter_r) / spec.beam_count as f64);
            if keep < spec.dropout * r / spec.max_range {
                continue;
            }
            let phi = TAU * (step as f64 + jitter_phi) / spec.azimuth_samples as f64 - PI;
            let annulus = spec.annulus(r);
            let z = -spec.sensor_height + lift * annulus.height;
            let intensity = 0.1 * (annulus.class % 8) as f64 + 0.05 * shade;
            records.push([(r * phi.cos()) as f32, (r * phi.sin()) as f32, z as f32, intensity as f32]);
            labels.push(annulus.class);
        }
    }
    PointCloud::from_xyzi(&records)?.with_labels(labels)
}
