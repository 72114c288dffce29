//! Command-line front end: parses arguments, resolves configuration and
//! dispatches to the library.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gdmopt::diffusion::VarianceMode;
use gdmopt::eval::{Axis, Method};
use gdmopt::problems::ProblemKind;
use gdmopt::Error;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gdmopt", version, about = "Diffusion-model optimizers for network optimization problems")]
pub struct Cli {
    /// JSON file with default values for any flag (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for data generation, sampling and sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw instances and label them with the exact solver.
    GenData(GenDataFlags),
    /// Train a diffusion model (or the regression baseline) on a dataset.
    Train(TrainFlags),
    /// Generate solutions with a trained diffusion model.
    Sample(SampleFlags),
    /// Score a method against the stored optima of a dataset.
    Eval(EvalFlags),
    /// Sweep one hyperparameter and tabulate the exceed ratio.
    Ablate(AblateFlags),
    /// Write per-step objective traces for a batch of instances.
    Trace(TraceFlags),
    /// Evaluate the expected-objective bounds and their Monte-Carlo check.
    Bounds(BoundsFlags),
}

#[derive(Debug, Args, Serialize)]
struct GenDataFlags {
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// NU position lattice size per axis.
    #[arg(long)]
    pos_grid: Option<usize>,
    /// NU power lattice size.
    #[arg(long)]
    pow_grid: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct TrainFlags {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model to train: gdm (default) or mtfnn.
    #[arg(long)]
    model: Option<ModelArg>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    steps: Option<usize>,
    #[arg(long)]
    p_uncond: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    milestones: Option<Vec<usize>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    ema_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Append objective and violation of the current state to the condition.
    #[arg(long)]
    cond_terms: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone)]
struct SamplingFlags {
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    num_samples: Option<usize>,
    #[arg(long)]
    normalize_first_k: Option<usize>,
    #[arg(long)]
    variance_mode: Option<VarianceMode>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
struct SampleFlags {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Instance as JSON: `{"x": [...]}` or a bare array.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use only the first LIMIT rows of --data.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write all solutions as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    sampling: SamplingFlags,
}

#[derive(Debug, Args, Serialize)]
struct EvalFlags {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    gd_step: Option<f64>,
    #[arg(long)]
    gd_iterations: Option<usize>,
    #[arg(long)]
    gd_restarts: Option<usize>,
    #[arg(long)]
    gd_penalty: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    sampling: SamplingFlags,
}

#[derive(Debug, Args, Serialize)]
struct AblateFlags {
    #[arg(long)]
    axis: Option<Axis>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Training data; the last tenth is held out unless --test is given.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Checkpoint reused by the omega axis.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    steps: Option<usize>,
    #[arg(long)]
    p_uncond: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    normalize_first_k: Option<usize>,
    #[arg(long)]
    variance_mode: Option<VarianceMode>,
}

#[derive(Debug, Args, Serialize)]
struct TraceFlags {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of instances to trace.
    #[arg(long)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    sampling: SamplingFlags,
}

#[derive(Debug, Args, Serialize)]
struct BoundsFlags {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    f_star: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    p_i: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run the command line `argv` (including the program name) and return the
/// process exit status: 0 on success, 1 on invalid input, 2 on I/O failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let name = match &cli.command {
        Command::GenData(_) => "gen-data",
        Command::Train(_) => "train",
        Command::Sample(_) => "sample",
        Command::Eval(_) => "eval",
        Command::Ablate(_) => "ablate",
        Command::Trace(_) => "trace",
        Command::Bounds(_) => "bounds",
    };
    let mut keys = config::section(file.as_ref(), name)?;
    let file_workers = match keys.remove("workers") {
        None => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| Error::Input("\"workers\" must be a non-negative integer".into()))?
                as usize,
        ),
    };
    let workers = cli
        .workers
        .or(file_workers)
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::GenData(f) => commands::gen_data(&keys, &f, workers),
        Command::Train(f) => commands::train(&keys, &f),
        Command::Sample(f) => commands::sample(&keys, &f),
        Command::Eval(f) => commands::eval(&keys, &f),
        Command::Ablate(f) => commands::ablate(&keys, &f),
        Command::Trace(f) => commands::trace(&keys, &f),
        Command::Bounds(f) => commands::bounds(&keys, &f),
    })
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Gdm,
    Mtfnn,
}
