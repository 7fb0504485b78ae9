//! Backward generation by proximal inversion of forward steps.
//!
//! A forward step moves a point `v` interacting with a frozen snapshot
//! `x_1..x_n` to
//!
//! ```text
//! y = v - gamma / n * sum_i grad W(v - x_i)
//! ```
//!
//! Given `y`, the pre-image is a stationary point of
//!
//! ```text
//! H(v) = |v - y|^2 / 2 - gamma / n * sum_i W(v - x_i)
//! ```
//!
//! found by plain gradient descent started at `y`. Walking this inversion
//! from the last snapshot back to the first carries a point from the
//! uniformized configuration to data space.
//!
//! `H` is strongly convex when `gamma * L_pair < 1`. Outside that range each
//! snapshot particle contributes a narrow well to `H`. The inner descent then
//! finds the stationary point reachable from `y`, which need not be the
//! pre-image.

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{EfsError, Result};
use crate::forward::Trajectory;
use crate::particles::{norm_sq, ParticleSet};
use crate::potential::{joint_prox_step_bound, pair_hessian_spectral_bound, PotentialParams};

/// Which snapshot each backward step inverts against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SnapshotMode {
    /// `j = k, ..., 0`, inverting `y^(j)` against `x^(j)`: `k + 1` inversions.
    #[default]
    Paper,
    /// `j = k, ..., 1`, inverting `y^(j)` against `x^(j-1)`: `k` inversions,
    /// each the exact inverse of a forward step of an added point.
    Exact,
}

impl fmt::Display for SnapshotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SnapshotMode::Paper => "paper",
            SnapshotMode::Exact => "exact",
        })
    }
}

impl FromStr for SnapshotMode {
    type Err = EfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(SnapshotMode::Paper),
            "exact" => Ok(SnapshotMode::Exact),
            other => Err(EfsError::invalid(format!(
                "unknown snapshot mode {other:?} (expected paper or exact)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackwardConfig {
    /// Must match the forward step size of the trajectory.
    pub gamma: f64,
    /// Inner gradient-descent step.
    pub beta: f64,
    /// Cap on inner iterations per snapshot.
    pub max_inner: usize,
    /// Inner loop stops once `|grad H| <= grad_tol`.
    pub grad_tol: f64,
    pub snapshot_mode: SnapshotMode,
}

impl BackwardConfig {
    pub const DEFAULT_GRAD_TOL: f64 = 1e-10;

    pub fn new(gamma: f64, beta: f64, max_inner: usize) -> Self {
        BackwardConfig {
            gamma,
            beta,
            max_inner,
            grad_tol: Self::DEFAULT_GRAD_TOL,
            snapshot_mode: SnapshotMode::default(),
        }
    }

    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = tol;
        self
    }

    pub fn with_snapshot_mode(mut self, mode: SnapshotMode) -> Self {
        self.snapshot_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(EfsError::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(EfsError::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.max_inner == 0 {
            return Err(EfsError::invalid("inner iteration count T must be >= 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(EfsError::invalid(format!(
                "grad_tol must be >= 0, got {}",
                self.grad_tol
            )));
        }
        Ok(())
    }
}

/// Non-fatal findings about a backward configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    /// `gamma >= 1 / L_pair`: the proximal objective may be non-convex.
    ConvexityGuard { gamma: f64, limit: f64 },
    /// `beta * (1 + gamma * L_pair) >= 2`: inner descent may oscillate.
    InnerStepUnstable { beta: f64, limit: f64 },
    /// `gamma` above the joint-problem step bound.
    JointBound { gamma: f64, bound: f64 },
    /// Backward `gamma` differs from the trajectory's forward `gamma`.
    GammaMismatch { backward: f64, forward: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::ConvexityGuard { gamma, limit } => write!(
                f,
                "gamma = {gamma} is not below 1/L_pair = {limit:.4e}; proximal objective may be non-convex"
            ),
            Diagnostic::InnerStepUnstable { beta, limit } => write!(
                f,
                "beta = {beta} is not below 2/(1 + gamma L_pair) = {limit:.4e}; inner descent may oscillate"
            ),
            Diagnostic::JointBound { gamma, bound } => write!(
                f,
                "gamma = {gamma} exceeds the joint proximal step bound {bound:.4e}"
            ),
            Diagnostic::GammaMismatch { backward, forward } => write!(
                f,
                "backward gamma = {backward} differs from forward gamma = {forward}"
            ),
        }
    }
}

/// Checks `cfg` against the curvature bounds for a snapshot of `n` particles.
pub fn diagnostics(cfg: &BackwardConfig, n: usize, p: &PotentialParams) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if let Ok(l) = pair_hessian_spectral_bound(p) {
        if cfg.gamma * l >= 1.0 {
            out.push(Diagnostic::ConvexityGuard {
                gamma: cfg.gamma,
                limit: 1.0 / l,
            });
        }
        let limit = 2.0 / (1.0 + cfg.gamma * l);
        if cfg.beta >= limit {
            out.push(Diagnostic::InnerStepUnstable {
                beta: cfg.beta,
                limit,
            });
        }
    }
    if let Ok(bound) = joint_prox_step_bound(n, p) {
        if cfg.gamma > bound {
            out.push(Diagnostic::JointBound {
                gamma: cfg.gamma,
                bound,
            });
        }
    }
    out
}

/// [`diagnostics`] plus the forward/backward step-size consistency check.
pub fn trajectory_diagnostics(cfg: &BackwardConfig, traj: &Trajectory) -> Vec<Diagnostic> {
    let mut out = diagnostics(cfg, traj.n(), traj.params());
    if cfg.gamma != traj.gamma() {
        out.push(Diagnostic::GammaMismatch {
            backward: cfg.gamma,
            forward: traj.gamma(),
        });
    }
    out
}

/// `H(v) = |v - anchor|^2 / 2 - gamma / n * sum_i W(v - x_i)`.
pub fn prox_objective(
    v: &[f64],
    anchor: &[f64],
    snap: &ParticleSet,
    gamma: f64,
    p: &PotentialParams,
) -> Result<f64> {
    check_point(v, snap)?;
    check_point(anchor, snap)?;
    let mut energy = 0.0;
    for x in snap.rows() {
        let r2: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        energy += p.value_sq(r2)?;
    }
    let quad: f64 = v.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * quad - gamma / snap.len() as f64 * energy)
}

/// `grad H(v) = v - anchor - gamma / n * sum_i grad W(v - x_i)`.
pub fn prox_gradient(
    v: &[f64],
    anchor: &[f64],
    snap: &ParticleSet,
    gamma: f64,
    p: &PotentialParams,
) -> Result<Vec<f64>> {
    check_point(v, snap)?;
    check_point(anchor, snap)?;
    let mut out = vec![0.0; v.len()];
    let mut force = vec![0.0; v.len()];
    prox_gradient_into(v, anchor, snap, gamma, p, &mut force, &mut out)?;
    Ok(out)
}

fn check_point(v: &[f64], snap: &ParticleSet) -> Result<()> {
    if snap.is_empty() {
        return Err(EfsError::invalid("snapshot is empty"));
    }
    snap.require_dim(v.len())?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EfsError::invalid("non-finite point"));
    }
    Ok(())
}

#[inline]
fn prox_gradient_into(
    v: &[f64],
    anchor: &[f64],
    snap: &ParticleSet,
    gamma: f64,
    p: &PotentialParams,
    force: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    force.iter_mut().for_each(|f| *f = 0.0);
    for x in snap.rows() {
        let r2: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        let f = p.grad_factor_sq(r2)?;
        for ((acc, a), b) in force.iter_mut().zip(v).zip(x) {
            *acc += f * (a - b);
        }
    }
    let scale = gamma / snap.len() as f64;
    for (((o, a), y), g) in out.iter_mut().zip(v).zip(anchor).zip(force.iter()) {
        *o = a - y - scale * g;
    }
    Ok(())
}

/// Result of one proximal inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub point: Vec<f64>,
    /// `|grad H|` at the returned point.
    pub residual: f64,
    /// Gradient steps taken.
    pub iterations: usize,
}

/// Inverts one forward step of an added point against `snap`.
pub fn invert_step(
    y: &[f64],
    snap: &ParticleSet,
    cfg: &BackwardConfig,
    p: &PotentialParams,
) -> Result<Inversion> {
    invert_step_observed(y, snap, cfg, p, |_| {})
}

/// [`invert_step`] calling `observe` with every iterate, starting with `y`.
pub(crate) fn invert_step_observed(
    y: &[f64],
    snap: &ParticleSet,
    cfg: &BackwardConfig,
    p: &PotentialParams,
    mut observe: impl FnMut(&[f64]),
) -> Result<Inversion> {
    cfg.validate()?;
    check_point(y, snap)?;
    let d = y.len();
    let mut v = y.to_vec();
    let mut delta = vec![0.0; d];
    let mut force = vec![0.0; d];
    let mut iterations = 0;
    loop {
        observe(&v);
        prox_gradient_into(&v, y, snap, cfg.gamma, p, &mut force, &mut delta)?;
        let residual = norm_sq(&delta).sqrt();
        if !residual.is_finite() {
            return Err(EfsError::Instability {
                beta: cfg.beta,
                iteration: iterations,
            });
        }
        if residual <= cfg.grad_tol || iterations == cfg.max_inner {
            return Ok(Inversion {
                point: v,
                residual,
                iterations,
            });
        }
        for (a, g) in v.iter_mut().zip(&delta) {
            *a -= cfg.beta * g;
        }
        iterations += 1;
        if v.iter().any(|a| !a.is_finite()) {
            return Err(EfsError::Instability {
                beta: cfg.beta,
                iteration: iterations,
            });
        }
    }
}

/// Points visited by one backward pass, from the augmented point to the
/// generated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardPath {
    /// `points[0]` is the starting point; each later entry is the result of
    /// one inversion.
    pub points: Vec<Vec<f64>>,
    /// Final `|grad H|` of each inversion, in the same order.
    pub inner_residuals: Vec<f64>,
}

impl BackwardPath {
    /// The generated sample `y^(0)`.
    pub fn output(&self) -> &[f64] {
        self.points.last().expect("path holds at least the start point")
    }

    pub fn max_residual(&self) -> f64 {
        self.inner_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Carries `y_k` from the last snapshot of `traj` back to data space.
pub fn run_backward(y_k: &[f64], traj: &Trajectory, cfg: &BackwardConfig) -> Result<BackwardPath> {
    cfg.validate()?;
    traj.initial().require_dim(y_k.len())?;
    if cfg.gamma != traj.gamma() {
        warn!(
            "{}",
            Diagnostic::GammaMismatch {
                backward: cfg.gamma,
                forward: traj.gamma()
            }
        );
    }
    let k = traj.k();
    let steps: Vec<(usize, usize)> = match cfg.snapshot_mode {
        SnapshotMode::Paper => (0..=k).rev().map(|j| (j, j)).collect(),
        SnapshotMode::Exact => (1..=k).rev().map(|j| (j, j - 1)).collect(),
    };
    let mut points = Vec::with_capacity(steps.len() + 1);
    let mut inner_residuals = Vec::with_capacity(steps.len());
    points.push(y_k.to_vec());
    for (j, snap_index) in steps {
        let y = points.last().expect("non-empty");
        let inv = invert_step(y, traj.snapshot(snap_index), cfg, traj.params()).map_err(|e| {
            EfsError::BackwardStep {
                step: j,
                source: Box::new(e),
            }
        })?;
        inner_residuals.push(inv.residual);
        points.push(inv.point);
    }
    Ok(BackwardPath {
        points,
        inner_residuals,
    })
}
