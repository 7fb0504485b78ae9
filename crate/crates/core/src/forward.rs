//! Forward transport: simultaneous gradient descent on the interaction
//! energy, recording every iterate.
//!
//! The per-particle update is
//!
//! ```text
//! x_i <- x_i - gamma / (n - 1) * sum_{a != i} grad W(x_i - x_a)
//! ```
//!
//! evaluated on the old snapshot for all `i` at once. Each row's sum runs in
//! ascending `a`; only rows are distributed across threads, so trajectories
//! are bit-identical for any thread count.

use log::warn;

use crate::error::{EfsError, Result};
use crate::exec::Execution;
use crate::particles::ParticleSet;
use crate::potential::{pair_hessian_spectral_bound, PotentialParams};

/// Step size, iteration count and potential of a forward run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardConfig {
    pub gamma: f64,
    pub k: usize,
    pub params: PotentialParams,
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        validate_gamma(self.gamma)?;
        if self.k == 0 {
            return Err(EfsError::invalid("forward iteration count k must be >= 1"));
        }
        Ok(())
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(EfsError::invalid(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    Ok(())
}

/// Snapshots `x^(0) ..= x^(k)` of a forward run with its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    snapshots: Vec<ParticleSet>,
    gamma: f64,
    params: PotentialParams,
}

impl Trajectory {
    /// Assembles a trajectory from stored snapshots (e.g. read from disk).
    pub fn new(snapshots: Vec<ParticleSet>, gamma: f64, params: PotentialParams) -> Result<Self> {
        validate_gamma(gamma)?;
        let first = snapshots
            .first()
            .ok_or_else(|| EfsError::invalid("trajectory needs at least one snapshot"))?;
        let (n, d) = (first.len(), first.dim());
        for (j, s) in snapshots.iter().enumerate() {
            if s.len() != n || s.dim() != d {
                return Err(EfsError::invalid(format!(
                    "snapshot {j} is {} x {}, expected {n} x {d}",
                    s.len(),
                    s.dim()
                )));
            }
        }
        Ok(Trajectory {
            snapshots,
            gamma,
            params,
        })
    }

    /// Number of forward steps.
    pub fn k(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].len()
    }

    pub fn dim(&self) -> usize {
        self.snapshots[0].dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn params(&self) -> &PotentialParams {
        &self.params
    }

    pub fn snapshot(&self, j: usize) -> &ParticleSet {
        &self.snapshots[j]
    }

    pub fn snapshots(&self) -> &[ParticleSet] {
        &self.snapshots
    }

    pub fn initial(&self) -> &ParticleSet {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &ParticleSet {
        self.snapshots.last().expect("non-empty by construction")
    }
}

/// `E_n = 1/(n(n-1)) * sum_i sum_{j != i} W(x_i - x_j)`.
pub fn interaction_energy(ps: &ParticleSet, p: &PotentialParams) -> Result<f64> {
    interaction_energy_with(ps, p, Execution::default())
}

pub fn interaction_energy_with(ps: &ParticleSet, p: &PotentialParams, exec: Execution) -> Result<f64> {
    ps.require_len(2)?;
    let n = ps.len();
    let rows = exec.map_indices(n, |i| -> Result<f64> {
        let xi = ps.row(i);
        let mut acc = 0.0;
        for (a, xa) in ps.rows().enumerate() {
            if a == i {
                continue;
            }
            let r2: f64 = xi.iter().zip(xa).map(|(u, v)| (u - v) * (u - v)).sum();
            acc += p.value_sq(r2)?;
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// Row `i` is `1/(n-1) * sum_{a != i} grad W(x_i - x_a)`.
pub fn forward_gradient(ps: &ParticleSet, p: &PotentialParams) -> Result<ParticleSet> {
    forward_gradient_with(ps, p, Execution::default())
}

pub fn forward_gradient_with(
    ps: &ParticleSet,
    p: &PotentialParams,
    exec: Execution,
) -> Result<ParticleSet> {
    ps.require_len(2)?;
    let (n, d) = (ps.len(), ps.dim());
    let mut out = vec![0.0; n * d];
    let scale = 1.0 / (n as f64 - 1.0);
    let singular = std::sync::atomic::AtomicBool::new(false);
    exec.fill_chunks(&mut out, d, |i, acc| {
        if row_gradient(ps, i, p, acc).is_err() {
            singular.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        acc.iter_mut().for_each(|v| *v *= scale);
    });
    if singular.into_inner() {
        return Err(EfsError::Singularity(
            "coincident particles with epsilon = 0".into(),
        ));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(EfsError::Singularity("non-finite interaction force".into()));
    }
    Ok(ParticleSet::from_flat_unchecked(out, n, d))
}

/// Accumulates `sum_{a != i} grad W(x_i - x_a)` into `acc` in ascending `a`.
#[inline]
fn row_gradient(ps: &ParticleSet, i: usize, p: &PotentialParams, acc: &mut [f64]) -> Result<()> {
    let xi = ps.row(i);
    for (a, xa) in ps.rows().enumerate() {
        if a == i {
            continue;
        }
        let r2: f64 = xi.iter().zip(xa).map(|(u, v)| (u - v) * (u - v)).sum();
        let f = p.grad_factor_sq(r2)?;
        for ((o, u), v) in acc.iter_mut().zip(xi).zip(xa) {
            *o += f * (u - v);
        }
    }
    Ok(())
}

/// One simultaneous update `x_i <- x_i - gamma * Delta_i`.
pub fn forward_step(ps: &ParticleSet, gamma: f64, p: &PotentialParams) -> Result<ParticleSet> {
    forward_step_with(ps, gamma, p, Execution::default())
}

pub fn forward_step_with(
    ps: &ParticleSet,
    gamma: f64,
    p: &PotentialParams,
    exec: Execution,
) -> Result<ParticleSet> {
    validate_gamma(gamma)?;
    let grad = forward_gradient_with(ps, p, exec)?;
    let data: Vec<f64> = ps
        .as_flat()
        .iter()
        .zip(grad.as_flat())
        .map(|(x, g)| x - gamma * g)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EfsError::Singularity("forward step produced non-finite positions".into()));
    }
    Ok(ParticleSet::from_flat_unchecked(data, ps.len(), ps.dim()))
}

/// Runs `k` forward steps from `ps0`, keeping all `k + 1` snapshots.
pub fn run_forward(
    ps0: &ParticleSet,
    gamma: f64,
    k: usize,
    p: &PotentialParams,
) -> Result<Trajectory> {
    run_forward_with(ps0, &ForwardConfig { gamma, k, params: *p }, Execution::default())
}

pub fn run_forward_with(ps0: &ParticleSet, cfg: &ForwardConfig, exec: Execution) -> Result<Trajectory> {
    cfg.validate()?;
    ps0.require_len(2)?;
    let p = &cfg.params;
    if !p.in_ball_regime(ps0.dim()) {
        warn!(
            "s = {} is outside [d - 2, d) for d = {}; the forward limit need not be a uniform ball",
            p.s(),
            ps0.dim()
        );
    }
    if let Ok(l) = pair_hessian_spectral_bound(p) {
        if cfg.gamma * l > 1.0 {
            warn!(
                "gamma * L = {:.4e} exceeds 1; monotone energy descent is not guaranteed",
                cfg.gamma * l
            );
        }
    }

    let mut snapshots = Vec::with_capacity(cfg.k + 1);
    snapshots.push(ps0.clone());
    for iteration in 1..=cfg.k {
        let next = forward_step_with(&snapshots[iteration - 1], cfg.gamma, p, exec).map_err(|e| {
            EfsError::ForwardStep {
                iteration,
                source: Box::new(e),
            }
        })?;
        snapshots.push(next);
    }
    Trajectory::new(snapshots, cfg.gamma, *p)
}

/// Whether `gamma * L_pair <= 1`, the regime where each step provably lowers
/// the energy.
pub fn step_guarantees_descent(gamma: f64, p: &PotentialParams) -> bool {
    pair_hessian_spectral_bound(p)
        .map(|l| gamma * l <= 1.0)
        .unwrap_or(false)
}

/// Snapshot indices `j` whose energy exceeds that of snapshot `j - 1`.
pub fn descent_violations(energies: &[f64]) -> Vec<usize> {
    energies
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(j, _)| j + 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s: f64, eps: f64) -> PotentialParams {
        PotentialParams::new(s, eps).unwrap()
    }

    fn pair(dist: f64) -> ParticleSet {
        ParticleSet::from_rows(&[[0.0, 0.0], [dist, 0.0]]).unwrap()
    }

    fn cloud(n: usize, seed: u64) -> ParticleSet {
        let mut rng = crate::rng::EfsRng::new(seed);
        let data = (0..2 * n).map(|_| rng.normal()).collect();
        ParticleSet::from_flat(data, n, 2).unwrap()
    }

    #[test]
    fn energy_examples() {
        assert_eq!(interaction_energy(&pair(1.0), &params(2.0, 0.0)).unwrap(), 1.0);
        let h = 3f64.sqrt() / 2.0;
        let tri = ParticleSet::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]).unwrap();
        assert!((interaction_energy(&tri, &params(2.0, 0.0)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn energy_permutation_symmetric() {
        let ps = cloud(30, 1);
        let p = params(1.0, 1e-3);
        let order: Vec<usize> = (0..30).rev().collect();
        let a = interaction_energy(&ps, &p).unwrap();
        let b = interaction_energy(&ps.permuted(&order).unwrap(), &p).unwrap();
        assert!((a - b).abs() <= 1e-13 * a.abs());
    }

    #[test]
    fn energy_singular_for_coincident_points() {
        let ps = ParticleSet::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let err = interaction_energy(&ps, &params(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, EfsError::Singularity(_)));
        assert!(interaction_energy(&ps, &params(1.0, 0.1)).is_ok());
    }

    #[test]
    fn needs_two_particles() {
        let ps = ParticleSet::from_rows(&[[1.0, 1.0]]).unwrap();
        assert!(forward_gradient(&ps, &params(1.0, 0.1)).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = forward_gradient(&pair(1.0), &params(3.0, 0.0)).unwrap();
        assert!(g.as_flat().iter().all(|&v| v == 0.0));
        let g = forward_gradient(&pair(2.0), &params(1.0, 0.0)).unwrap();
        assert_eq!(g.row(0), &[-1.75, 0.0]);
        assert_eq!(g.row(1), &[1.75, 0.0]);
    }

    #[test]
    fn gradient_rows_cancel() {
        let ps = cloud(50, 2);
        let g = forward_gradient(&ps, &params(1.0, 1e-3)).unwrap();
        let sum = g.centroid();
        assert!(sum.iter().all(|v| (v * 50.0).abs() < 1e-12), "{sum:?}");
    }

    #[test]
    fn coincident_particles_singular_without_epsilon() {
        let ps = ParticleSet::from_rows(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(
            forward_gradient(&ps, &params(1.0, 0.0)).unwrap_err(),
            EfsError::Singularity(_)
        ));
        let ok = forward_gradient(&ps, &params(1.0, 0.01)).unwrap();
        assert!(ok.as_flat().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let ps = cloud(64, 3);
        let p = params(1.0, 1e-3);
        let a = forward_gradient_with(&ps, &p, Execution::Sequential).unwrap();
        let b = forward_gradient_with(&ps, &p, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_examples() {
        let p = params(1.0, 0.0);
        assert_eq!(forward_step(&pair(1.0), 0.3, &p).unwrap(), pair(1.0));
        let ps = cloud(10, 4);
        assert_eq!(forward_step(&ps, 0.0, &params(1.0, 0.1)).unwrap(), ps);
        let next = forward_step(&pair(2.0), 0.1, &p).unwrap();
        let d = next.row(1)[0] - next.row(0)[0];
        assert!((d - 1.65).abs() < 1e-15, "{d}");
    }

    #[test]
    fn step_conserves_center_of_mass() {
        let ps = cloud(40, 5).translated(&[300.0, -700.0]).unwrap();
        let next = forward_step(&ps, 0.1, &params(1.0, 1e-3)).unwrap();
        for (a, b) in ps.centroid().iter().zip(next.centroid()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn run_forward_replays_steps() {
        let ps = cloud(20, 6);
        let p = params(1.0, 1e-2);
        let traj = run_forward(&ps, 0.05, 1, &p).unwrap();
        assert_eq!(traj.k(), 1);
        assert_eq!(traj.snapshot(0), &ps);
        assert_eq!(traj.snapshot(1), &forward_step(&ps, 0.05, &p).unwrap());
        assert!(run_forward(&ps, 0.05, 0, &p).is_err());
    }

    #[test]
    fn pair_converges_to_unit_separation() {
        let traj = run_forward(&pair(2.0), 0.1, 200, &params(1.0, 0.0)).unwrap();
        let last = traj.last();
        let d = last.row(1)[0] - last.row(0)[0];
        // scalar fixed-point oracle on the separation
        let mut r = 2.0f64;
        for _ in 0..200 {
            r -= 2.0 * 0.1 * r * (1.0 - r.powf(-3.0));
        }
        assert!((r - 1.0).abs() < 1e-6);
        assert!((d - r).abs() < 1e-9, "{d} vs {r}");
    }

    #[test]
    fn singularity_names_iteration() {
        let ps = ParticleSet::from_rows(&[[0.5, 0.0], [0.5, 0.0], [2.0, 1.0]]).unwrap();
        let err = run_forward(&ps, 0.1, 3, &params(1.0, 0.0)).unwrap_err();
        match &err {
            EfsError::ForwardStep { iteration, .. } => assert_eq!(*iteration, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_numerical());
        assert!(err.to_string().contains("iteration 1"));
    }

    #[test]
    fn descent_violation_indices() {
        assert_eq!(descent_violations(&[3.0, 2.0, 2.5, 1.0, 1.0]), vec![2]);
        assert!(step_guarantees_descent(0.001, &params(1.0, 0.5)));
        assert!(!step_guarantees_descent(0.1, &params(1.0, 1e-3)));
    }

    fn max_gap(a: &ParticleSet, b: &ParticleSet) -> f64 {
        a.as_flat()
            .iter()
            .zip(b.as_flat())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const GAMMA: f64 = 0.05;
        const K: usize = 10;

        fn p() -> PotentialParams {
            params(1.0, 0.1)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn translation_equivariant(seed in any::<u64>(), cx in -50.0f64..50.0, cy in -50.0f64..50.0) {
                let ps = cloud(30, seed);
                let a = run_forward(&ps, GAMMA, K, &p()).unwrap();
                let b = run_forward(&ps.translated(&[cx, cy]).unwrap(), GAMMA, K, &p()).unwrap();
                for (sa, sb) in a.snapshots().iter().zip(b.snapshots()) {
                    prop_assert!(max_gap(&sa.translated(&[cx, cy]).unwrap(), sb) <= 1e-9);
                }
            }

            #[test]
            fn rotation_equivariant(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU) {
                let (sn, cs) = angle.sin_cos();
                let rot = |ps: &ParticleSet| ps.map_rows(|x, o| {
                    o[0] = cs * x[0] - sn * x[1];
                    o[1] = sn * x[0] + cs * x[1];
                }).unwrap();
                let ps = cloud(30, seed);
                let a = run_forward(&ps, GAMMA, K, &p()).unwrap();
                let b = run_forward(&rot(&ps), GAMMA, K, &p()).unwrap();
                for (sa, sb) in a.snapshots().iter().zip(b.snapshots()) {
                    prop_assert!(max_gap(&rot(sa), sb) <= 1e-9);
                }
            }

            #[test]
            fn permutation_equivariant(seed in any::<u64>(), perm in Just((0..30).collect::<Vec<usize>>()).prop_shuffle()) {
                let ps = cloud(30, seed);
                let a = run_forward(&ps, GAMMA, K, &p()).unwrap();
                let b = run_forward(&ps.permuted(&perm).unwrap(), GAMMA, K, &p()).unwrap();
                for (sa, sb) in a.snapshots().iter().zip(b.snapshots()) {
                    // row sums run in a different order, so only rounding differs
                    prop_assert!(max_gap(&sa.permuted(&perm).unwrap(), sb) <= 1e-12);
                }
            }

            #[test]
            fn descent_when_step_is_small(seed in any::<u64>()) {
                let p = p();
                let gamma = 1.0 / pair_hessian_spectral_bound(&p).unwrap();
                let traj = run_forward(&cloud(25, seed), gamma, 8, &p).unwrap();
                let energies: Vec<f64> = traj
                    .snapshots()
                    .iter()
                    .map(|s| interaction_energy(s, &p).unwrap())
                    .collect();
                prop_assert!(descent_violations(&energies).is_empty(), "{:?}", energies);
            }
        }
    }
}
