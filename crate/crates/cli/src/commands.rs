use std::fs;
use std::path::{Path, PathBuf};

use efs_core::backward::{run_backward, trajectory_diagnostics, BackwardConfig, SnapshotMode};
use efs_core::datasets::{gaussian_mixture, swiss_roll, LabeledPoints, MixtureSpec};
use efs_core::exec::Execution;
use efs_core::forward::{run_forward_with, ForwardConfig, Trajectory};
use efs_core::io::{self, format_g17, EfsbFile, Format};
use efs_core::metrics::{energy_trace, mmd_squared_with, nn_novelty, uniformity_report, MmdVariant};
use efs_core::particles::ParticleSet;
use efs_core::pipeline::{
    batch_seeds, generate_from_trajectory, interpolation_path, Augmentation, BatchOptions, Origin,
    SampleBatch,
};
use efs_core::potential::PotentialParams;
use efs_core::rng::{derive_seed, EfsRng};
use log::warn;

use crate::config::{DatasetKind, RunConfig};
use crate::svg::Scatter;
use crate::CliError;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn kv(key: &str, value: impl std::fmt::Display) {
    println!("{key}={value}");
}

fn join_g17(v: &[f64]) -> String {
    v.iter().map(|x| format_g17(*x)).collect::<Vec<_>>().join(",")
}

/// Loads a point cloud. Csv files may carry extra columns after the
/// coordinates (e.g. sample files); only `x*` and `label` are kept.
fn load_cloud(path: &Path) -> Result<LabeledPoints, CliError> {
    match Format::from_path(path)? {
        Format::Efsb => Ok(io::load_points(path, Format::Efsb)?),
        Format::Csv => {
            let text = read_text(path)?;
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
            let keep: Vec<usize> = header
                .iter()
                .enumerate()
                .filter(|(_, c)| *c == &"label" || c.strip_prefix('x').is_some_and(|r| r.parse::<usize>().is_ok()))
                .map(|(i, _)| i)
                .collect();
            if keep.len() == header.len() {
                return Ok(io::parse_csv(&text, path)?);
            }
            let project = |line: &str| {
                let fields: Vec<&str> = line.split(',').collect();
                keep.iter()
                    .map(|&i| fields.get(i).copied().unwrap_or(""))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let mut projected = project(&header.join(","));
            projected.push('\n');
            for line in lines {
                projected.push_str(&project(line));
                projected.push('\n');
            }
            Ok(io::parse_csv(&projected, path)?)
        }
    }
}

fn make_dataset(cfg: &RunConfig) -> Result<LabeledPoints, CliError> {
    let mut rng = EfsRng::new(cfg.seed);
    Ok(match cfg.dataset {
        DatasetKind::Mixture => gaussian_mixture(cfg.n, &MixtureSpec::default(), &mut rng)?,
        DatasetKind::Swiss => swiss_roll(cfg.n, cfg.noise, &mut rng)?,
    })
}

fn forward_config(cfg: &RunConfig, d: usize) -> Result<ForwardConfig, CliError> {
    Ok(ForwardConfig {
        gamma: cfg.gamma,
        k: cfg.k,
        params: PotentialParams::new(cfg.s.resolve(d)?, cfg.epsilon)?,
    })
}

fn backward_config(cfg: &RunConfig, gamma: f64) -> BackwardConfig {
    BackwardConfig::new(gamma, cfg.beta, cfg.t)
        .with_grad_tol(cfg.grad_tol)
        .with_snapshot_mode(cfg.snapshot_mode)
}

pub fn dataset(cfg: &RunConfig, out: &Path, svg: Option<&Path>) -> Result<(), CliError> {
    let lp = make_dataset(cfg)?;
    io::save_points(&lp, out, Format::from_path(out)?)?;
    if let Some(svg) = svg {
        let plot = Scatter {
            points: Some((&lp.points, lp.labels.as_deref())),
            ..Default::default()
        };
        write_file(svg, plot.render())?;
    }
    kv("n", lp.points.len());
    kv("d", lp.points.dim());
    kv("out", out.display());
    Ok(())
}

pub fn forward(
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    energy: Option<&Path>,
    svg: Option<&Path>,
) -> Result<(), CliError> {
    cfg.require_positive_gamma()?;
    let lp = load_cloud(input)?;
    let fwd = forward_config(cfg, lp.points.dim())?;
    let traj = run_forward_with(&lp.points, &fwd, Execution::default())?;
    io::save_trajectory(&traj, lp.labels.clone(), out)?;
    let trace = energy_trace(&traj)?;
    if let Some(path) = energy {
        let mut text = String::from("iteration,energy\n");
        for (j, e) in trace.iter().enumerate() {
            text.push_str(&format!("{j},{}\n", format_g17(*e)));
        }
        write_file(path, text)?;
    }
    if let Some(svg) = svg {
        let plot = Scatter {
            points: Some((traj.last(), lp.labels.as_deref())),
            ..Default::default()
        };
        write_file(svg, plot.render())?;
    }
    kv("n", traj.n());
    kv("d", traj.dim());
    kv("snapshots", traj.snapshots().len());
    kv("s", format_g17(fwd.params.s()));
    kv("energy_initial", format_g17(trace[0]));
    kv("energy_final", format_g17(*trace.last().unwrap()));
    kv("out", out.display());
    Ok(())
}

pub struct SampleRequest {
    pub mode: Augmentation,
    pub pair: Option<(usize, usize)>,
    pub t: Option<f64>,
    pub steps: Option<usize>,
    pub replay: Option<PathBuf>,
}

fn read_seeds(path: &Path) -> Result<Vec<u64>, CliError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    let col = header
        .split(',')
        .position(|c| c.trim() == "seed")
        .ok_or_else(|| CliError::Io(format!("{}: no seed column", path.display())))?;
    let mut seeds = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(col).unwrap_or("").trim();
        let seed = field.parse().map_err(|_| {
            CliError::Io(format!("{}:{}: cannot parse seed {field:?}", path.display(), idx + 1))
        })?;
        seeds.push(seed);
    }
    if seeds.is_empty() {
        return Err(CliError::Io(format!("{}: no seeds", path.display())));
    }
    Ok(seeds)
}

fn samples_csv(batch: &SampleBatch) -> String {
    let d = batch.generated.dim();
    let interp = matches!(batch.mode, Augmentation::Interpolation { .. });
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.push("seed".into());
    if interp {
        header.extend(["i", "j", "t"].map(String::from));
    }
    let mut text = header.join(",");
    text.push('\n');
    for (s, row) in batch.generated.rows().enumerate() {
        text.push_str(&join_g17(row));
        text.push_str(&format!(",{}", batch.seeds[s]));
        if let Origin::Interpolation { i, j, t } = batch.origins[s] {
            text.push_str(&format!(",{i},{j},{}", format_g17(t)));
        }
        text.push('\n');
    }
    text
}

pub fn sample(
    cfg: &RunConfig,
    trajectory: &Path,
    req: &SampleRequest,
    out: &Path,
    paths_out: Option<&Path>,
    svg: Option<&Path>,
) -> Result<(), CliError> {
    let (traj, labels) = io::load_trajectory(trajectory)?;
    let bwd = backward_config(cfg, traj.gamma());
    let mut mode = req.mode;
    if let Augmentation::Interpolation { pair, t } = &mut mode {
        *pair = req.pair;
        *t = req.t;
    } else if req.pair.is_some() || req.t.is_some() || req.steps.is_some() {
        return Err(CliError::Config("--i, --j, --t and --steps need --mode interp".into()));
    }
    let opts = BatchOptions {
        keep_paths: paths_out.is_some(),
        exec: Execution::default(),
    };
    let batch = match (req.steps, &req.replay) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--steps paths draw no randomness; --replay does not apply".into()))
        }
        (Some(steps), None) => {
            let (i, j) = req
                .pair
                .ok_or_else(|| CliError::Config("--steps needs --i and --j".into()))?;
            interpolation_path(&traj, i, j, steps, &bwd, opts)?
        }
        (None, Some(replay)) => generate_from_trajectory(&traj, &bwd, mode, &read_seeds(replay)?, opts)?,
        (None, None) => generate_from_trajectory(&traj, &bwd, mode, &batch_seeds(cfg.seed, cfg.m), opts)?,
    };
    write_file(out, samples_csv(&batch))?;
    if let (Some(path), Some(paths)) = (paths_out, &batch.paths) {
        let d = traj.dim();
        let mut text = String::from("sample,step");
        for k in 0..d {
            text.push_str(&format!(",x{k}"));
        }
        text.push('\n');
        for (s, p) in paths.iter().enumerate() {
            for (step, v) in p.points.iter().enumerate() {
                text.push_str(&format!("{s},{step},{}\n", join_g17(v)));
            }
        }
        write_file(path, text)?;
    }
    if let Some(svg) = svg {
        let lines = match req.steps {
            Some(_) => vec![batch.generated.rows().map(|r| [r[0], r.get(1).copied().unwrap_or(0.0)]).collect()],
            None => vec![],
        };
        let plot = Scatter {
            points: Some((traj.initial(), labels.as_deref())),
            stars: Some(&batch.generated),
            lines,
        };
        write_file(svg, plot.render())?;
    }
    kv("samples", batch.len());
    kv("mode", batch.mode);
    kv("snapshot_mode", bwd.snapshot_mode);
    kv("out", out.display());
    Ok(())
}

fn snapshot_of(path: &Path, snapshot: Option<usize>) -> Result<(ParticleSet, usize, usize), CliError> {
    match Format::from_path(path)? {
        Format::Efsb => {
            let file = EfsbFile::read(path)?;
            let last = file.snapshots.len() - 1;
            let j = snapshot.unwrap_or(last);
            let ps = file.snapshot_points(j)?.points;
            Ok((ps, j, last))
        }
        Format::Csv => {
            if snapshot.is_some_and(|j| j != 0) {
                return Err(CliError::Config("a csv file holds only snapshot 0".into()));
            }
            Ok((load_cloud(path)?.points, 0, 0))
        }
    }
}

pub fn uniformity(input: &Path, snapshot: Option<usize>) -> Result<(), CliError> {
    let (ps, j, last) = snapshot_of(input, snapshot)?;
    let rep = uniformity_report(&ps)?;
    kv("snapshot", j);
    kv("radial_ks", format_g17(rep.radial_ks));
    if let Some(a) = rep.angular_ks {
        kv("angular_ks", format_g17(a));
    }
    kv("center", join_g17(&rep.enclosure.center));
    kv("radius", format_g17(rep.enclosure.radius));
    if last > 0 && j != 0 {
        let (ps0, _, _) = snapshot_of(input, Some(0))?;
        let rep0 = uniformity_report(&ps0)?;
        kv("radial_ks_initial", format_g17(rep0.radial_ks));
        if let Some(a) = rep0.angular_ks {
            kv("angular_ks_initial", format_g17(a));
        }
    }
    Ok(())
}

pub fn mmd(
    cfg: &RunConfig,
    a: &Path,
    b: Option<&Path>,
    halves: bool,
    unregularized: bool,
) -> Result<(), CliError> {
    let first = load_cloud(a)?.points;
    let (pa, pb) = if halves {
        let n = first.len();
        if n < 2 {
            return Err(CliError::Config("--halves needs at least two points".into()));
        }
        let d = first.dim();
        let flat = first.as_flat();
        let h = n / 2;
        (
            ParticleSet::from_flat(flat[..h * d].to_vec(), h, d)?,
            ParticleSet::from_flat(flat[h * d..].to_vec(), n - h, d)?,
        )
    } else {
        let b = b.ok_or_else(|| CliError::Config("need --b or --halves".into()))?;
        (first, load_cloud(b)?.points)
    };
    let eps = if unregularized { 0.0 } else { cfg.epsilon };
    let p = PotentialParams::new(cfg.s.resolve(pa.dim())?, eps)?;
    let variant = if unregularized {
        MmdVariant::Unregularized
    } else {
        MmdVariant::Regularized
    };
    let v = mmd_squared_with(&pa, &pb, &p, variant, Execution::default())?;
    kv("mmd2", format_g17(v));
    kv("s", format_g17(p.s()));
    kv("epsilon", format_g17(p.epsilon()));
    kv("n_a", pa.len());
    kv("n_b", pb.len());
    Ok(())
}

pub fn novelty(generated: &Path, training: &Path) -> Result<(), CliError> {
    let gen = load_cloud(generated)?.points;
    let train = snapshot_of(training, Some(0))?.0;
    let rep = nn_novelty(&gen, &train)?;
    kv("min_nn", format_g17(rep.min_nn));
    kv("mean_nn", format_g17(rep.mean_nn));
    match rep.self_nn_mean {
        Some(s) => {
            kv("self_nn_mean", format_g17(s));
            kv("ratio", format_g17(rep.mean_nn / s));
        }
        None => kv("self_nn_mean", "nan"),
    }
    Ok(())
}

pub fn energy(trajectory: &Path) -> Result<(), CliError> {
    let (traj, _) = io::load_trajectory(trajectory)?;
    let trace = energy_trace(&traj)?;
    let violations = efs_core::forward::descent_violations(&trace);
    kv("snapshots", trace.len());
    kv("energy_initial", format_g17(trace[0]));
    kv("energy_final", format_g17(*trace.last().unwrap()));
    kv("descent_violations", violations.len());
    kv("energy", join_g17(&trace));
    Ok(())
}

fn choose_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = EfsRng::new(derive_seed(seed, u64::MAX));
    let mut all: Vec<usize> = (0..n).collect();
    let count = count.min(n);
    for a in 0..count {
        let b = a + rng.index(n - a);
        all.swap(a, b);
    }
    all.truncate(count);
    all
}

pub fn roundtrip(cfg: &RunConfig, input: Option<&Path>, count: usize, tolerance: f64) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Config("--indices must be >= 1".into()));
    }
    let lp = match input {
        Some(path) => load_cloud(path)?,
        None => make_dataset(cfg)?,
    };
    let fwd = forward_config(cfg, lp.points.dim())?;
    let traj: Trajectory = run_forward_with(&lp.points, &fwd, Execution::default())?;
    let bwd = backward_config(cfg, cfg.gamma);
    for diag in trajectory_diagnostics(&bwd, &traj) {
        warn!("{diag}");
    }
    let indices = choose_indices(traj.n(), count, cfg.seed);
    let errors = Execution::default().map_indices(indices.len(), |a| {
        let i = indices[a];
        run_backward(traj.last().row(i), &traj, &bwd).map(|path| {
            let y0 = path.output();
            y0.iter()
                .zip(traj.initial().row(i))
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        })
    });
    let errors = errors.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let max = errors.iter().copied().fold(0.0, f64::max);
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    kv("snapshot_mode", bwd.snapshot_mode);
    kv(
        "indices",
        indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
    );
    kv("errors", join_g17(&errors));
    kv("max_error", format_g17(max));
    kv("mean_error", format_g17(mean));
    kv("tolerance", format_g17(tolerance));
    match bwd.snapshot_mode {
        SnapshotMode::Exact => {
            let pass = max <= tolerance;
            kv("pass", pass);
            if !pass {
                return Err(CliError::Failed(format!(
                    "max recovery error {max:.4e} exceeds {tolerance:.1e}"
                )));
            }
        }
        SnapshotMode::Paper => {
            kv("pass", "unchecked");
            eprintln!(
                "note: paper snapshot mode runs one more inversion than forward steps; its error is reported, not checked"
            );
        }
    }
    Ok(())
}
