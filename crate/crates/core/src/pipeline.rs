//! End-to-end sampling: forward transport of the data, augmentation with new
//! points in the uniformized configuration, backward generation of each new
//! point.
//!
//! Every generated sample owns a seed derived from the batch seed and its
//! index. All randomness for that sample is drawn from a generator seeded
//! with it, so a batch can be replayed, or extended, from its seeds alone.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};

use crate::backward::{run_backward, trajectory_diagnostics, BackwardConfig, BackwardPath};
use crate::error::{EfsError, Result, Stage};
use crate::exec::Execution;
use crate::forward::{run_forward_with, ForwardConfig, Trajectory};
use crate::particles::{dist, norm_sq, ParticleSet};
use crate::rng::{derive_seed, EfsRng};

/// Sphere enclosing a uniformized configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Enclosure {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Enclosure {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Same enclosure shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Enclosure {
        Enclosure {
            center: self.center.iter().zip(shift).map(|(c, s)| c + s).collect(),
            radius: self.radius,
        }
    }
}

/// Center is the mean, radius the mean distance to it.
pub fn estimate_enclosure(ps: &ParticleSet) -> Result<Enclosure> {
    ps.require_len(2)?;
    let center = ps.centroid();
    let radius = ps.rows().map(|x| dist(x, &center)).sum::<f64>() / ps.len() as f64;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(EfsError::DegenerateEnclosure);
    }
    Ok(Enclosure { center, radius })
}

fn unit_direction(d: usize, rng: &mut EfsRng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = norm_sq(&g).sqrt();
        // A zero Gaussian vector has probability zero, but is not impossible
        // in floating point.
        if norm > 0.0 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn check_enclosure(enc: &Enclosure, d: usize) -> Result<()> {
    if d < 2 {
        return Err(EfsError::UnsupportedDimension(d));
    }
    if enc.dim() != d {
        return Err(EfsError::DimensionMismatch {
            expected: enc.dim(),
            found: d,
        });
    }
    if !(enc.radius > 0.0) || !enc.radius.is_finite() {
        return Err(EfsError::DegenerateEnclosure);
    }
    Ok(())
}

/// Uniform point on the sphere of radius `enc.radius` around `enc.center`.
pub fn sample_sphere(enc: &Enclosure, d: usize, rng: &mut EfsRng) -> Result<Vec<f64>> {
    check_enclosure(enc, d)?;
    let u = unit_direction(d, rng);
    Ok(enc.center.iter().zip(&u).map(|(c, v)| c + enc.radius * v).collect())
}

/// Uniform point in the ball bounded by the enclosure sphere.
pub fn sample_ball(enc: &Enclosure, d: usize, rng: &mut EfsRng) -> Result<Vec<f64>> {
    check_enclosure(enc, d)?;
    let u = unit_direction(d, rng);
    let r = enc.radius * rng.uniform().powf(1.0 / d as f64);
    Ok(enc.center.iter().zip(&u).map(|(c, v)| c + r * v).collect())
}

/// `(1 - t) x_i + t x_j`.
pub fn interpolate_latent(ps: &ParticleSet, i: usize, j: usize, t: f64) -> Result<Vec<f64>> {
    for index in [i, j] {
        if index >= ps.len() {
            return Err(EfsError::IndexOutOfRange {
                index,
                len: ps.len(),
            });
        }
    }
    if i == j {
        return Err(EfsError::invalid(format!("interpolation needs distinct indices, got {i} twice")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(EfsError::invalid(format!("t must lie in [0, 1], got {t}")));
    }
    Ok(ps
        .row(i)
        .iter()
        .zip(ps.row(j))
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect())
}

/// How new points are placed in the last snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    /// Uniform on the enclosure sphere.
    Sphere,
    /// Uniform in the enclosure ball.
    Ball,
    /// On the segment between two particles. Missing pair or `t` is drawn
    /// per sample: a uniform distinct pair, `t ~ U[0, 1)`.
    Interpolation {
        pair: Option<(usize, usize)>,
        t: Option<f64>,
    },
}

impl Augmentation {
    pub fn kind(&self) -> &'static str {
        match self {
            Augmentation::Sphere => "sphere",
            Augmentation::Ball => "ball",
            Augmentation::Interpolation { .. } => "interp",
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

impl FromStr for Augmentation {
    type Err = EfsError;

    /// Parses the mode name; interpolation parameters stay unspecified.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Augmentation::Sphere),
            "ball" => Ok(Augmentation::Ball),
            "interp" | "interpolation" => Ok(Augmentation::Interpolation { pair: None, t: None }),
            other => Err(EfsError::invalid(format!(
                "unknown augmentation mode {other:?} (expected sphere, ball or interp)"
            ))),
        }
    }
}

/// Where one augmented point came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Origin {
    Sphere,
    Ball,
    Interpolation { i: usize, j: usize, t: f64 },
}

/// Generated samples with what is needed to regenerate them.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    /// `m x d` generated samples `y^(0)`.
    pub generated: ParticleSet,
    /// `m x d` augmented points `y^(k)` the backward pass started from.
    pub starts: ParticleSet,
    /// Per-sample seeds; zero for samples that drew no randomness.
    pub seeds: Vec<u64>,
    pub origins: Vec<Origin>,
    pub mode: Augmentation,
    pub paths: Option<Vec<BackwardPath>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generated.is_empty()
    }
}

/// Controls batch generation beyond the algorithmic configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchOptions {
    pub keep_paths: bool,
    pub exec: Execution,
}


/// Seeds for samples `0..m` of a batch seeded with `seed`.
pub fn batch_seeds(seed: u64, m: usize) -> Vec<u64> {
    (0..m as u64).map(|i| derive_seed(seed, i)).collect()
}

/// Runs the forward pass on `ps0`, then generates `m` samples.
pub fn efs_generate(
    ps0: &ParticleSet,
    fwd: &ForwardConfig,
    bwd: &BackwardConfig,
    m: usize,
    aug: Augmentation,
    seed: u64,
    opts: BatchOptions,
) -> Result<(Trajectory, SampleBatch)> {
    if m == 0 {
        return Err(EfsError::invalid("sample count m must be >= 1"));
    }
    bwd.validate()?;
    let traj = run_forward_with(ps0, fwd, opts.exec)?;
    let batch = generate_from_trajectory(&traj, bwd, aug, &batch_seeds(seed, m), opts)?;
    Ok((traj, batch))
}

/// Generates one sample per seed from an existing trajectory. Replaying a
/// batch means calling this with its recorded seeds.
pub fn generate_from_trajectory(
    traj: &Trajectory,
    bwd: &BackwardConfig,
    aug: Augmentation,
    seeds: &[u64],
    opts: BatchOptions,
) -> Result<SampleBatch> {
    if seeds.is_empty() {
        return Err(EfsError::invalid("no samples requested"));
    }
    bwd.validate()?;
    let last = traj.last();
    let d = traj.dim();
    let enclosure = match aug {
        Augmentation::Sphere | Augmentation::Ball => Some(estimate_enclosure(last)?),
        Augmentation::Interpolation { pair, t } => {
            if last.len() < 2 {
                return Err(EfsError::invalid("interpolation needs at least two particles"));
            }
            if let Some((i, j)) = pair {
                interpolate_latent(last, i, j, t.unwrap_or(0.0))?;
            }
            if let Some(t) = t {
                if !(0.0..=1.0).contains(&t) {
                    return Err(EfsError::invalid(format!("t must lie in [0, 1], got {t}")));
                }
            }
            None
        }
    };
    if let Some(enc) = &enclosure {
        info!("enclosure center {:?}, radius {:.6}", enc.center, enc.radius);
    }
    log_diagnostics(bwd, traj);

    let augment = |seed: u64| -> Result<(Vec<f64>, Origin)> {
        let mut rng = EfsRng::new(seed);
        match aug {
            Augmentation::Sphere => {
                let enc = enclosure.as_ref().expect("computed above");
                Ok((sample_sphere(enc, d, &mut rng)?, Origin::Sphere))
            }
            Augmentation::Ball => {
                let enc = enclosure.as_ref().expect("computed above");
                Ok((sample_ball(enc, d, &mut rng)?, Origin::Ball))
            }
            Augmentation::Interpolation { pair, t } => {
                let (i, j) = pair.unwrap_or_else(|| {
                    let i = rng.index(last.len());
                    let j = (i + 1 + rng.index(last.len() - 1)) % last.len();
                    (i, j)
                });
                let t = t.unwrap_or_else(|| rng.uniform());
                Ok((interpolate_latent(last, i, j, t)?, Origin::Interpolation { i, j, t }))
            }
        }
    };

    let results = opts.exec.map_indices(seeds.len(), |s| {
        let (start, origin) = augment(seeds[s]).map_err(|e| EfsError::Sample {
            stage: Stage::Augment,
            sample: s,
            source: Box::new(e),
        })?;
        let path = run_backward(&start, traj, bwd).map_err(|e| EfsError::Sample {
            stage: Stage::Backward,
            sample: s,
            source: Box::new(e),
        })?;
        Ok((start, origin, path))
    });
    assemble(results, seeds.to_vec(), aug, d, opts.keep_paths)
}

/// Backward-maps `steps` equispaced points of the segment from `x_i^(k)` to
/// `x_j^(k)`.
pub fn interpolation_path(
    traj: &Trajectory,
    i: usize,
    j: usize,
    steps: usize,
    bwd: &BackwardConfig,
    opts: BatchOptions,
) -> Result<SampleBatch> {
    if steps < 2 {
        return Err(EfsError::invalid(format!("interpolation path needs steps >= 2, got {steps}")));
    }
    bwd.validate()?;
    let last = traj.last();
    interpolate_latent(last, i, j, 0.0)?;
    log_diagnostics(bwd, traj);
    let results = opts.exec.map_indices(steps, |s| {
        let t = s as f64 / (steps - 1) as f64;
        let start = interpolate_latent(last, i, j, t)?;
        let path = run_backward(&start, traj, bwd).map_err(|e| EfsError::Sample {
            stage: Stage::Backward,
            sample: s,
            source: Box::new(e),
        })?;
        Ok((start, Origin::Interpolation { i, j, t }, path))
    });
    assemble(
        results,
        vec![0; steps],
        Augmentation::Interpolation {
            pair: Some((i, j)),
            t: None,
        },
        traj.dim(),
        opts.keep_paths,
    )
}

fn log_diagnostics(bwd: &BackwardConfig, traj: &Trajectory) {
    for diag in trajectory_diagnostics(bwd, traj) {
        warn!("{diag}");
    }
}

fn assemble(
    results: Vec<Result<(Vec<f64>, Origin, BackwardPath)>>,
    seeds: Vec<u64>,
    mode: Augmentation,
    d: usize,
    keep_paths: bool,
) -> Result<SampleBatch> {
    let m = results.len();
    let mut generated = Vec::with_capacity(m * d);
    let mut starts = Vec::with_capacity(m * d);
    let mut origins = Vec::with_capacity(m);
    let mut paths = keep_paths.then(|| Vec::with_capacity(m));
    let mut worst = 0.0f64;
    for r in results {
        let (start, origin, path) = r?;
        worst = worst.max(path.max_residual());
        starts.extend_from_slice(&start);
        generated.extend_from_slice(path.output());
        origins.push(origin);
        if let Some(p) = paths.as_mut() {
            p.push(path);
        }
    }
    info!("generated {m} samples; largest inner residual {worst:.3e}");
    Ok(SampleBatch {
        generated: ParticleSet::from_flat(generated, m, d)?,
        starts: ParticleSet::from_flat(starts, m, d)?,
        seeds,
        origins,
        mode,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::SnapshotMode;
    use crate::potential::PotentialParams;
    use proptest::prelude::*;

    fn cloud(n: usize, d: usize, seed: u64) -> ParticleSet {
        let mut rng = EfsRng::new(seed);
        let data = (0..n * d).map(|_| rng.normal()).collect();
        ParticleSet::from_flat(data, n, d).unwrap()
    }

    /// A run where every proximal objective is strongly convex. Training
    /// points come back only up to O(1/n): a particle moved with weight
    /// `1/(n-1)` per partner, an added point moves with `1/n`.
    fn convex_setup() -> (ParticleSet, ForwardConfig, BackwardConfig) {
        let p = PotentialParams::new(1.0, 1.0).unwrap();
        let fwd = ForwardConfig {
            gamma: 0.1,
            k: 10,
            params: p,
        };
        let bwd = BackwardConfig::new(0.1, 0.5, 500).with_snapshot_mode(SnapshotMode::Exact);
        (cloud(150, 2, 11), fwd, bwd)
    }

    #[test]
    fn enclosure_of_cross() {
        let ps = ParticleSet::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let enc = estimate_enclosure(&ps).unwrap();
        assert_eq!(enc.center, vec![0.0, 0.0]);
        assert_eq!(enc.radius, 1.0);
    }

    #[test]
    fn enclosure_translates() {
        let ps = cloud(40, 3, 1);
        let shift = [3.0, -1.0, 0.5];
        let a = estimate_enclosure(&ps).unwrap();
        let b = estimate_enclosure(&ps.translated(&shift).unwrap()).unwrap();
        for ((bc, ac), sh) in b.center.iter().zip(&a.center).zip(shift) {
            assert!((bc - ac - sh).abs() < 1e-12);
        }
        assert!((a.radius - b.radius).abs() < 1e-12);
    }

    #[test]
    fn enclosure_of_unit_circle() {
        let mut rng = EfsRng::new(5);
        let rows: Vec<[f64; 2]> = (0..10_000)
            .map(|_| {
                let a = rng.uniform_range(0.0, std::f64::consts::TAU);
                [a.cos(), a.sin()]
            })
            .collect();
        let enc = estimate_enclosure(&ParticleSet::from_rows(&rows).unwrap()).unwrap();
        assert!((enc.radius - 1.0).abs() < 0.02);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let ps = ParticleSet::from_rows(&[[2.0, 2.0]; 5]).unwrap();
        assert!(matches!(estimate_enclosure(&ps), Err(EfsError::DegenerateEnclosure)));
    }

    #[test]
    fn sphere_draw_radius_and_determinism() {
        let enc = Enclosure {
            center: vec![1.0, -2.0, 0.5],
            radius: 2.5,
        };
        let mut rng = EfsRng::new(9);
        for _ in 0..200 {
            let v = sample_sphere(&enc, 3, &mut rng).unwrap();
            assert!((dist(&v, &enc.center) - 2.5).abs() < 1e-12);
        }
        let a = sample_sphere(&enc, 3, &mut EfsRng::new(4)).unwrap();
        let b = sample_sphere(&enc, 3, &mut EfsRng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sphere_angles_uniform() {
        let enc = Enclosure {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let mut rng = EfsRng::new(21);
        let draws = 50_000;
        let mut bins = [0usize; 16];
        for _ in 0..draws {
            let v = sample_sphere(&enc, 2, &mut rng).unwrap();
            let a = v[1].atan2(v[0]).rem_euclid(std::f64::consts::TAU);
            bins[((a / std::f64::consts::TAU * 16.0) as usize).min(15)] += 1;
        }
        for b in bins {
            let freq = b as f64 / draws as f64;
            assert!((freq - 1.0 / 16.0).abs() <= 0.15 / 16.0, "{bins:?}");
        }
    }

    #[test]
    fn sphere_rejects_line() {
        let enc = Enclosure {
            center: vec![0.0],
            radius: 1.0,
        };
        assert!(matches!(
            sample_sphere(&enc, 1, &mut EfsRng::new(0)),
            Err(EfsError::UnsupportedDimension(1))
        ));
    }

    #[test]
    fn ball_draw_radial_law() {
        let enc = Enclosure {
            center: vec![0.0, 0.0],
            radius: 2.0,
        };
        let mut rng = EfsRng::new(3);
        let n = 20_000;
        let inside_half = (0..n)
            .filter(|_| norm_sq(&sample_ball(&enc, 2, &mut rng).unwrap()).sqrt() < 1.0)
            .count();
        // P(|v| < r/2) = 1/4 in the plane
        assert!((inside_half as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn interpolation_endpoints() {
        let ps = ParticleSet::from_rows(&[[0.0, 0.0], [2.0, 2.0], [5.0, -1.0]]).unwrap();
        assert_eq!(interpolate_latent(&ps, 0, 2, 0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(interpolate_latent(&ps, 0, 2, 1.0).unwrap(), vec![5.0, -1.0]);
        assert_eq!(interpolate_latent(&ps, 0, 1, 0.5).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(
            interpolate_latent(&ps, 0, 3, 0.5),
            Err(EfsError::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(interpolate_latent(&ps, 1, 1, 0.5).is_err());
        assert!(interpolate_latent(&ps, 0, 1, 1.5).is_err());
    }

    #[test]
    fn interpolation_at_zero_recovers_training_point() {
        let (ps0, fwd, bwd) = convex_setup();
        let aug = Augmentation::Interpolation {
            pair: Some((4, 9)),
            t: Some(0.0),
        };
        let (_, batch) = efs_generate(&ps0, &fwd, &bwd, 1, aug, 0, BatchOptions::default()).unwrap();
        assert!(dist(batch.generated.row(0), ps0.row(4)) < 5e-2);
    }

    #[test]
    fn path_endpoints_recover_training_points() {
        let (ps0, fwd, bwd) = convex_setup();
        let traj = run_forward_with(&ps0, &fwd, Execution::default()).unwrap();
        let batch = interpolation_path(&traj, 2, 7, 2, &bwd, BatchOptions::default()).unwrap();
        assert!(dist(batch.generated.row(0), ps0.row(2)) < 5e-2);
        assert!(dist(batch.generated.row(1), ps0.row(7)) < 5e-2);
        assert!(interpolation_path(&traj, 2, 7, 1, &bwd, BatchOptions::default()).is_err());
    }

    #[test]
    fn sphere_starts_on_enclosure() {
        let (ps0, fwd, bwd) = convex_setup();
        let opts = BatchOptions {
            keep_paths: true,
            ..Default::default()
        };
        let (traj, batch) = efs_generate(&ps0, &fwd, &bwd, 8, Augmentation::Sphere, 3, opts).unwrap();
        let enc = estimate_enclosure(traj.last()).unwrap();
        for y in batch.starts.rows() {
            assert!((dist(y, &enc.center) - enc.radius).abs() < 1e-12);
        }
        let paths = batch.paths.as_ref().unwrap();
        assert_eq!(paths.len(), 8);
        assert!(paths.iter().all(|p| p.points.len() == fwd.k + 1));
        assert_eq!(batch.seeds, batch_seeds(3, 8));
    }

    #[test]
    fn replay_from_seeds_is_bitwise() {
        let (ps0, fwd, bwd) = convex_setup();
        let aug = Augmentation::Interpolation { pair: None, t: None };
        let (traj, batch) = efs_generate(&ps0, &fwd, &bwd, 6, aug, 17, BatchOptions::default()).unwrap();
        let seq = BatchOptions {
            exec: Execution::Sequential,
            ..Default::default()
        };
        let again = generate_from_trajectory(&traj, &bwd, aug, &batch.seeds, seq).unwrap();
        assert_eq!(again, batch);
        // a single seed replays its own row
        let one = generate_from_trajectory(&traj, &bwd, aug, &batch.seeds[3..4], seq).unwrap();
        assert_eq!(one.generated.row(0), batch.generated.row(3));
        for o in &batch.origins {
            match *o {
                Origin::Interpolation { i, j, t } => {
                    assert_ne!(i, j);
                    assert!((0.0..1.0).contains(&t));
                }
                _ => panic!("unexpected origin {o:?}"),
            }
        }
    }

    #[test]
    fn backward_failure_names_sample() {
        let (ps0, fwd, _) = convex_setup();
        let unstable = BackwardConfig::new(0.1, 1e6, 50);
        let err = efs_generate(&ps0, &fwd, &unstable, 3, Augmentation::Sphere, 1, BatchOptions::default())
            .unwrap_err();
        match &err {
            EfsError::Sample {
                stage: Stage::Backward,
                sample: 0,
                ..
            } => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_numerical());
    }

    #[test]
    fn zero_samples_rejected() {
        let (ps0, fwd, bwd) = convex_setup();
        assert!(efs_generate(&ps0, &fwd, &bwd, 0, Augmentation::Sphere, 1, BatchOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pipeline_translation_equivariance(
            cx in -20.0f64..20.0,
            cy in -20.0f64..20.0,
            seed in any::<u64>(),
        ) {
            let (ps0, fwd, bwd) = convex_setup();
            let opts = BatchOptions::default();
            let (_, a) = efs_generate(&ps0, &fwd, &bwd, 4, Augmentation::Sphere, seed, opts).unwrap();
            let shifted = ps0.translated(&[cx, cy]).unwrap();
            let (_, b) = efs_generate(&shifted, &fwd, &bwd, 4, Augmentation::Sphere, seed, opts).unwrap();
            for (ya, yb) in a.generated.rows().zip(b.generated.rows()) {
                prop_assert!((yb[0] - ya[0] - cx).abs() < 1e-8);
                prop_assert!((yb[1] - ya[1] - cy).abs() < 1e-8);
            }
        }
    }
}
