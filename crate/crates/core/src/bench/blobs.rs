use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::rng::RngSeed;

/// Stretch `e` of Q's per-blob covariance (eigenvalues `e` and `1/e`), calibrated so that the
/// sigma = 1, B = sqrt(n) B-test needs roughly 800-900 samples for 5% Type I and Type II errors.
pub const CALIBRATED_STRETCH: f64 = 8.0;

/// A `grid_size x grid_size` grid of 2-D Gaussians spaced `spacing` apart.
///
/// P uses identity covariance in every blob. Q uses covariance with eigenvalues
/// `(q_stretch, 1 / q_stretch)`, major axis rotated by `q_angle`, and every point shifted by
/// `q_shift` along the first axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub grid_size: usize,
    pub spacing: f64,
    pub q_stretch: f64,
    pub q_angle: f64,
    pub q_shift: f64,
    pub seed: RngSeed,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            spacing: 10.0,
            q_stretch: CALIBRATED_STRETCH,
            q_angle: std::f64::consts::FRAC_PI_4,
            q_shift: 0.0,
            seed: RngSeed(0),
        }
    }
}

impl BlobConfig {
    pub fn with_seed(&self, seed: RngSeed) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.grid_size == 0 {
            return Err(crate::Error::Config("grid size must be at least 1".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(crate::Error::Config(format!("spacing must be positive, got {}", self.spacing)));
        }
        if !(self.q_stretch >= 1.0 && self.q_stretch.is_finite()) {
            return Err(crate::Error::Config(format!("stretch must be at least 1, got {}", self.q_stretch)));
        }
        if !self.q_angle.is_finite() || !self.q_shift.is_finite() {
            return Err(crate::Error::Config("angle and shift must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Population {
    P,
    Q,
}

/// `n` points from P or Q using `cfg.seed`.
pub fn sample_blobs(cfg: &BlobConfig, n: usize, which: Population) -> SampleSet {
    sample_blobs_with(cfg, n, which, &mut cfg.seed.rng())
}

pub fn sample_blobs_with<R: Rng>(cfg: &BlobConfig, n: usize, which: Population, rng: &mut R) -> SampleSet {
    let g = cfg.grid_size;
    // Cholesky-like factor R diag(sqrt(e), 1/sqrt(e)) of Q's covariance
    let (sin, cos) = cfg.q_angle.sin_cos();
    let (a, b) = (cfg.q_stretch.sqrt(), 1.0 / cfg.q_stretch.sqrt());
    let factor = [[cos * a, -sin * b], [sin * a, cos * b]];
    let mut values = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let cell = rng.random_range(0..g * g);
        let cx = (cell / g) as f64 * cfg.spacing;
        let cy = (cell % g) as f64 * cfg.spacing;
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        match which {
            Population::P => {
                values.push(cx + u);
                values.push(cy + v);
            }
            Population::Q => {
                values.push(cx + factor[0][0] * u + factor[0][1] * v + cfg.q_shift);
                values.push(cy + factor[1][0] * u + factor[1][1] * v);
            }
        }
    }
    let label = match which {
        Population::P => "blobs-P",
        Population::Q => "blobs-Q",
    };
    SampleSet::new(values, 2, label).expect("blob samples are finite and non-empty")
}
