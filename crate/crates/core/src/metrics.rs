//! Evaluation statistics: kernel discrepancy, uniformity of a configuration,
//! nearest-neighbour novelty and energy along a trajectory.

use std::f64::consts::TAU;

use crate::error::{EfsError, Result};
use crate::exec::Execution;
use crate::forward::{interaction_energy_with, Trajectory};
use crate::particles::{dist, ParticleSet};
use crate::pipeline::{estimate_enclosure, Enclosure};
use crate::potential::PotentialParams;

/// Which empirical MMD estimator to compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MmdVariant {
    /// V-statistic of `1 / (s (|D|^2 + eps)^(s/2))`, diagonal terms
    /// included. Nonnegative for `s > 0, eps > 0`.
    #[default]
    Regularized,
    /// U-statistic of `1 / (s |D|^s)` without diagonal terms. Can be
    /// negative; fails if two points coincide across the sets.
    Unregularized,
}

/// Squared MMD with the regularized Riesz kernel.
pub fn mmd_squared(a: &ParticleSet, b: &ParticleSet, p: &PotentialParams) -> Result<f64> {
    mmd_squared_with(a, b, p, MmdVariant::default(), Execution::default())
}

pub fn mmd_squared_with(
    a: &ParticleSet,
    b: &ParticleSet,
    p: &PotentialParams,
    variant: MmdVariant,
    exec: Execution,
) -> Result<f64> {
    let s = p.s();
    if s == 0.0 {
        return Err(EfsError::UnsupportedKernel(
            "MMD needs s > 0; the logarithmic kernel is not positive definite".into(),
        ));
    }
    if a.is_empty() || b.is_empty() {
        return Err(EfsError::invalid("MMD needs non-empty point sets"));
    }
    b.require_dim(a.dim())?;
    let (eps, diagonal) = match variant {
        MmdVariant::Regularized => {
            if p.epsilon() <= 0.0 {
                return Err(EfsError::UnsupportedKernel(
                    "regularized MMD needs epsilon > 0".into(),
                ));
            }
            (p.epsilon(), true)
        }
        MmdVariant::Unregularized => (0.0, false),
    };
    let kernel = |x: &[f64], y: &[f64]| -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
        1.0 / (s * (r2 + eps).powf(0.5 * s))
    };
    let mean = |u: &ParticleSet, v: &ParticleSet, same: bool| -> Result<f64> {
        let rows = exec.map_indices(u.len(), |i| {
            let x = u.row(i);
            let mut acc = 0.0;
            for (j, y) in v.rows().enumerate() {
                if same && !diagonal && i == j {
                    continue;
                }
                acc += kernel(x, y);
            }
            acc
        });
        let total: f64 = rows.iter().sum();
        let pairs = if same && !diagonal {
            u.len() * (u.len() - 1)
        } else {
            u.len() * v.len()
        };
        if pairs == 0 {
            return Err(EfsError::invalid("U-statistic needs at least two points per set"));
        }
        if !total.is_finite() {
            return Err(EfsError::Singularity(
                "coincident points under the unregularized kernel".into(),
            ));
        }
        Ok(total / pairs as f64)
    };
    Ok(mean(a, a, true)? + mean(b, b, true)? - 2.0 * mean(a, b, false)?)
}

/// Distance of a configuration from the uniform ball law.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformityReport {
    /// KS statistic of `|x - c| / R` against `F(u) = u^d`, with `R` the
    /// largest distance from the center.
    pub radial_ks: f64,
    /// Kuiper statistic of the polar angles about `c` against the uniform
    /// circle law; only for `d = 2`. Unlike the plain KS statistic it does
    /// not depend on where the circle is cut.
    pub angular_ks: Option<f64>,
    pub enclosure: Enclosure,
}

/// Sorts `u` and returns `(D+, D-)` of its empirical CDF against `cdf`.
fn ks_sides(mut u: Vec<f64>, cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let (mut plus, mut minus) = (0.0f64, 0.0f64);
    for (i, &x) in u.iter().enumerate() {
        let f = cdf(x);
        plus = plus.max((i + 1) as f64 / n - f);
        minus = minus.max(f - i as f64 / n);
    }
    (plus, minus)
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(u: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    let (plus, minus) = ks_sides(u, cdf);
    plus.max(minus)
}

/// One-sample Kuiper statistic `D+ + D-`.
pub fn kuiper_statistic(u: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    let (plus, minus) = ks_sides(u, cdf);
    (plus + minus).min(1.0)
}

pub fn uniformity_report(ps: &ParticleSet) -> Result<UniformityReport> {
    ps.require_len(10)?;
    let enclosure = estimate_enclosure(ps)?;
    let c = &enclosure.center;
    let d = ps.dim();
    let dists: Vec<f64> = ps.rows().map(|x| dist(x, c)).collect();
    let r_max = dists.iter().copied().fold(0.0, f64::max);
    let radial_ks = ks_statistic(dists.iter().map(|r| r / r_max).collect(), |u| {
        u.clamp(0.0, 1.0).powi(d as i32)
    });
    let angular_ks = (d == 2).then(|| {
        let angles = ps
            .rows()
            .map(|x| (x[1] - c[1]).atan2(x[0] - c[0]).rem_euclid(TAU) / TAU)
            .collect();
        kuiper_statistic(angles, |u| u.clamp(0.0, 1.0))
    });
    Ok(UniformityReport {
        radial_ks,
        angular_ks,
        enclosure,
    })
}

/// Nearest-training-neighbour distances of generated points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoveltyReport {
    pub min_nn: f64,
    pub mean_nn: f64,
    /// Mean distance from each training point to its nearest other training
    /// point; `None` for a single training point.
    pub self_nn_mean: Option<f64>,
}

impl NoveltyReport {
    /// `mean_nn / self_nn_mean`.
    pub fn ratio(&self) -> Option<f64> {
        self.self_nn_mean.map(|s| self.mean_nn / s)
    }
}

fn nearest(x: &[f64], set: &ParticleSet, skip: Option<usize>) -> f64 {
    set.rows()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(_, y)| dist(x, y))
        .fold(f64::INFINITY, f64::min)
}

pub fn nn_novelty(generated: &ParticleSet, training: &ParticleSet) -> Result<NoveltyReport> {
    nn_novelty_with(generated, training, Execution::default())
}

pub fn nn_novelty_with(
    generated: &ParticleSet,
    training: &ParticleSet,
    exec: Execution,
) -> Result<NoveltyReport> {
    if generated.is_empty() || training.is_empty() {
        return Err(EfsError::invalid("nn_novelty needs non-empty point sets"));
    }
    training.require_dim(generated.dim())?;
    let nn = exec.map_indices(generated.len(), |i| nearest(generated.row(i), training, None));
    let min_nn = nn.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_nn = nn.iter().sum::<f64>() / nn.len() as f64;
    let self_nn_mean = (training.len() > 1).then(|| {
        let own = exec.map_indices(training.len(), |i| nearest(training.row(i), training, Some(i)));
        own.iter().sum::<f64>() / own.len() as f64
    });
    Ok(NoveltyReport {
        min_nn,
        mean_nn,
        self_nn_mean,
    })
}

/// Interaction energy of every snapshot, `k + 1` values.
pub fn energy_trace(traj: &Trajectory) -> Result<Vec<f64>> {
    energy_trace_with(traj, Execution::default())
}

pub fn energy_trace_with(traj: &Trajectory, exec: Execution) -> Result<Vec<f64>> {
    traj.snapshots()
        .iter()
        .map(|snap| interaction_energy_with(snap, traj.params(), exec))
        .collect()
}
