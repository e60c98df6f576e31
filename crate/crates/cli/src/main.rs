//! `sgp`: synthetic data generation, bootstrap labeling, the teacher-student
//! loop, single-pair registration and evaluation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sgp", version, about = "Self-supervised point cloud registration")]
struct Cli {
    /// Master seed; overrides the `seed` key of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (PLY fragments plus manifest.csv).
    GenData(GenDataArgs),
    /// Label pairs with FPFH and the teacher, without any training.
    Bootstrap(BootstrapArgs),
    /// Run the teacher-student loop on the training split and write a run directory.
    Run(RunArgs),
    /// Register one pair and print the 12 transform entries and the inlier rate.
    Register(RegisterArgs),
    /// Recall of a descriptor on a manifest split (reads ground truth).
    Evaluate(EvaluateArgs),
    /// Fill PLIR and recall columns of a run's metrics from ground truth.
    ExportMetrics(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Calibrated,
    Easy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 50)]
    test: usize,
    #[arg(long, value_enum, default_value_t = Preset::Calibrated)]
    preset: Preset,
    /// Surface samples per scene.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// `key = value` config file; missing keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Labels CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the `iterations` key.
    #[arg(long)]
    iterations: Option<usize>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Learned descriptor checkpoint; FPFH when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Learned descriptor checkpoint; FPFH when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Run directory written by `run`.
    #[arg(long)]
    run: PathBuf,
    /// Manifest the run was trained from.
    #[arg(long)]
    manifest: PathBuf,
    /// Destination; defaults to the run's metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
