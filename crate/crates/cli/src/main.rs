//! `efs`: generate datasets, run forward transport, sample, evaluate.
//!
//! Results go to stdout as `key=value` lines; logs and human-readable notes
//! go to stderr.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use efs_core::backward::SnapshotMode;
use efs_core::error::EfsError;

use config::{DatasetKind, Preset, SValue, Settings};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(EfsError),
    /// The command ran but its check did not pass.
    Failed(String),
}

impl From<EfsError> for CliError {
    fn from(e: EfsError) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core(e) if e.is_io() => 4,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "efs", version, about = "Estimation-free sampling with interacting particles")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "EFS_THREADS")]
    threads: Option<usize>,

    /// `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Start from a parameter row of the reference experiments.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    #[arg(long = "kind", value_enum)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Swiss roll noise level.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ForwardArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Potential exponent, a number or `d-2`.
    #[arg(long, allow_hyphen_values = true)]
    s: Option<SValue>,
}

#[derive(Args, Debug, Default)]
struct BackwardArgs {
    /// Inner iterations per backward step.
    #[arg(long = "T", id = "inner_steps")]
    t: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// `paper` or `exact`.
    #[arg(long)]
    snapshot_mode: Option<SnapshotMode>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Dataset {
        #[command(flatten)]
        data: DataArgs,
        /// Output file, `.csv` or `.efsb`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run forward transport and store the trajectory.
    Forward {
        /// Point cloud, `.csv` or `.efsb`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        fwd: ForwardArgs,
        /// Trajectory output (`.efsb`).
        #[arg(long)]
        out: PathBuf,
        /// Energy per snapshot as csv.
        #[arg(long)]
        energy: Option<PathBuf>,
        /// Plot of the last snapshot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Generate samples from a stored trajectory.
    Sample {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        bwd: BackwardArgs,
        /// sphere, ball or interp.
        #[arg(long, default_value = "sphere")]
        mode: String,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// First interpolation endpoint.
        #[arg(long)]
        i: Option<usize>,
        /// Second interpolation endpoint.
        #[arg(long)]
        j: Option<usize>,
        /// Interpolation weight; drawn per sample when absent.
        #[arg(long)]
        t: Option<f64>,
        /// Backward-map this many equispaced points between `--i` and `--j`.
        #[arg(long)]
        steps: Option<usize>,
        /// Regenerate the samples whose seeds are listed in this csv.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Backward paths as csv (`sample,step,x0,...`).
        #[arg(long)]
        paths: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Evaluate point clouds and trajectories.
    Metrics {
        #[command(subcommand)]
        which: MetricsCommand,
    },
    /// Forward-transport a dataset and pull selected particles back.
    Roundtrip {
        /// Point cloud; a dataset is generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fwd: ForwardArgs,
        #[command(flatten)]
        bwd: BackwardArgs,
        /// Number of particles to pull back.
        #[arg(long, default_value_t = 10)]
        indices: usize,
        /// Largest accepted recovery error in exact mode.
        #[arg(long, default_value_t = 5e-2)]
        tolerance: f64,
    },
}

#[derive(Subcommand, Debug)]
enum MetricsCommand {
    /// Radial and angular uniformity statistics.
    Uniformity {
        #[arg(long)]
        input: PathBuf,
        /// Snapshot of a trajectory file; defaults to the last.
        #[arg(long)]
        snapshot: Option<usize>,
    },
    /// Squared MMD between two clouds, or between the halves of one.
    Mmd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long, required_unless_present = "halves")]
        b: Option<PathBuf>,
        #[arg(long, conflicts_with = "b")]
        halves: bool,
        #[arg(long, allow_hyphen_values = true)]
        s: Option<SValue>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Unregularized U-statistic; may be negative.
        #[arg(long)]
        unregularized: bool,
    },
    /// Nearest-training-neighbour distances of generated points.
    Novelty {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        training: PathBuf,
    },
    /// Interaction energy of every snapshot.
    Energy {
        #[arg(long)]
        trajectory: PathBuf,
    },
}

impl DataArgs {
    fn settings(&self) -> Settings {
        Settings {
            dataset: self.dataset,
            n: self.n,
            seed: self.seed,
            noise: self.noise,
            ..Settings::default()
        }
    }
}

impl ForwardArgs {
    fn settings(&self) -> Settings {
        Settings {
            gamma: self.gamma,
            k: self.k,
            epsilon: self.epsilon,
            s: self.s,
            ..Settings::default()
        }
    }
}

impl BackwardArgs {
    fn settings(&self) -> Settings {
        Settings {
            t: self.t,
            beta: self.beta,
            grad_tol: self.grad_tol,
            snapshot_mode: self.snapshot_mode,
            ..Settings::default()
        }
    }
}

fn setup_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--threads must be >= 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::info!("built without the parallel feature; ignoring --threads {n}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    setup_threads(cli.threads)?;
    let mut base = cli.preset.map(Settings::preset).unwrap_or_default();
    if let Some(path) = &cli.config {
        base = base.overlay(Settings::from_file(path)?);
    }
    match cli.command {
        Command::Dataset { data, out, svg } => {
            let cfg = base.overlay(data.settings()).resolve()?;
            commands::dataset(&cfg, &out, svg.as_deref())
        }
        Command::Forward {
            input,
            fwd,
            out,
            energy,
            svg,
        } => {
            let cfg = base.overlay(fwd.settings()).resolve()?;
            commands::forward(&cfg, &input, &out, energy.as_deref(), svg.as_deref())
        }
        Command::Sample {
            trajectory,
            bwd,
            mode,
            m,
            seed,
            i,
            j,
            t,
            steps,
            replay,
            out,
            paths,
            svg,
        } => {
            let cfg = base
                .overlay(bwd.settings())
                .overlay(Settings {
                    m,
                    seed,
                    ..Settings::default()
                })
                .resolve()?;
            let req = commands::SampleRequest {
                mode: mode.parse()?,
                pair: match (i, j) {
                    (Some(i), Some(j)) => Some((i, j)),
                    (None, None) => None,
                    _ => return Err(CliError::Config("--i and --j must be given together".into())),
                },
                t,
                steps,
                replay,
            };
            commands::sample(&cfg, &trajectory, &req, &out, paths.as_deref(), svg.as_deref())
        }
        Command::Metrics { which } => match which {
            MetricsCommand::Uniformity { input, snapshot } => commands::uniformity(&input, snapshot),
            MetricsCommand::Mmd {
                a,
                b,
                halves,
                s,
                epsilon,
                unregularized,
            } => {
                let cfg = base
                    .overlay(Settings {
                        s,
                        epsilon,
                        ..Settings::default()
                    })
                    .resolve()?;
                commands::mmd(&cfg, &a, b.as_deref(), halves, unregularized)
            }
            MetricsCommand::Novelty {
                generated,
                training,
            } => commands::novelty(&generated, &training),
            MetricsCommand::Energy { trajectory } => commands::energy(&trajectory),
        },
        Command::Roundtrip {
            input,
            data,
            fwd,
            bwd,
            indices,
            tolerance,
        } => {
            let cfg = base
                .overlay(data.settings())
                .overlay(fwd.settings())
                .overlay(bwd.settings())
                .resolve()?;
            commands::roundtrip(&cfg, input.as_deref(), indices, tolerance)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
