//! Seeded synthetic point clouds.

use std::f64::consts::PI;

use crate::error::{EfsError, Result};
use crate::particles::ParticleSet;
use crate::rng::EfsRng;

/// Points with optional integer labels (mixture component, roll segment).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoints {
    pub points: ParticleSet,
    pub labels: Option<Vec<u32>>,
}

impl LabeledPoints {
    pub fn new(points: ParticleSet, labels: Option<Vec<u32>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(EfsError::invalid(format!(
                    "{} labels for {} points",
                    l.len(),
                    points.len()
                )));
            }
        }
        Ok(LabeledPoints { points, labels })
    }

    pub fn unlabeled(points: ParticleSet) -> Self {
        LabeledPoints {
            points,
            labels: None,
        }
    }
}

/// Isotropic Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for MixtureSpec {
    /// Four equally weighted components at `(+-2, +-2)` with std 0.3.
    fn default() -> Self {
        MixtureSpec {
            means: vec![
                vec![2.0, 2.0],
                vec![-2.0, 2.0],
                vec![-2.0, -2.0],
                vec![2.0, -2.0],
            ],
            stds: vec![0.3; 4],
            weights: vec![0.25; 4],
        }
    }
}

impl MixtureSpec {
    /// Checks shapes and weights; returns the dimension.
    pub fn validate(&self) -> Result<usize> {
        let k = self.means.len();
        if k == 0 {
            return Err(EfsError::invalid("mixture needs at least one component"));
        }
        if self.stds.len() != k || self.weights.len() != k {
            return Err(EfsError::invalid(format!(
                "mixture has {k} means, {} stds and {} weights",
                self.stds.len(),
                self.weights.len()
            )));
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(EfsError::invalid("mixture means must share a positive dimension"));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EfsError::invalid("mixture means must be finite"));
        }
        if let Some(s) = self.stds.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(EfsError::invalid(format!("component std must be >= 0, got {s}")));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(EfsError::invalid("mixture weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EfsError::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(d)
    }

    fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        self.weights
            .iter()
            .rposition(|&w| w > 0.0)
            .unwrap_or(self.weights.len() - 1)
    }
}

/// `n` i.i.d. draws; labels are component indices.
pub fn gaussian_mixture(n: usize, spec: &MixtureSpec, rng: &mut EfsRng) -> Result<LabeledPoints> {
    let d = spec.validate()?;
    if n == 0 {
        return Err(EfsError::invalid("n must be positive"));
    }
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = spec.pick(rng.uniform());
        labels.push(c as u32);
        let std = spec.stds[c];
        for &m in &spec.means[c] {
            data.push(m + std * rng.normal());
        }
    }
    LabeledPoints::new(ParticleSet::from_flat(data, n, d)?, Some(labels))
}

pub const SWISS_THETA_MIN: f64 = 1.5 * PI;
pub const SWISS_THETA_MAX: f64 = 4.5 * PI;
/// Coordinates are divided by this so the roll fits roughly in `[-5, 5]^2`.
pub const SWISS_SCALE: f64 = 3.0;

/// Planar Swiss roll: `theta ~ U[1.5 pi, 4.5 pi]`,
/// `x = theta (cos theta, sin theta) / 3 + noise * N(0, I)`.
/// Labels are the quartile of `theta` along the roll.
pub fn swiss_roll(n: usize, noise: f64, rng: &mut EfsRng) -> Result<LabeledPoints> {
    swiss_roll_with_angles(n, noise, rng).map(|(lp, _)| lp)
}

pub(crate) fn swiss_roll_with_angles(
    n: usize,
    noise: f64,
    rng: &mut EfsRng,
) -> Result<(LabeledPoints, Vec<f64>)> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(EfsError::invalid(format!("noise must be >= 0, got {noise}")));
    }
    if n == 0 {
        return Err(EfsError::invalid("n must be positive"));
    }
    let span = SWISS_THETA_MAX - SWISS_THETA_MIN;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = SWISS_THETA_MIN + span * rng.uniform();
        let (x, y) = (theta * theta.cos(), theta * theta.sin());
        data.push(x / SWISS_SCALE + noise * rng.normal());
        data.push(y / SWISS_SCALE + noise * rng.normal());
        let bucket = ((theta - SWISS_THETA_MIN) / span * 4.0).floor() as u32;
        labels.push(bucket.min(3));
        thetas.push(theta);
    }
    let lp = LabeledPoints::new(ParticleSet::from_flat(data, n, 2)?, Some(labels))?;
    Ok((lp, thetas))
}
