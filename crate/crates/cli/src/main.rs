use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcondense::Method;

mod commands;
mod data;

use data::DatasetKind;

#[derive(Debug, Parser)]
#[command(name = "hcondense", version, about = "Condense labeled image datasets by homogeneous clustering")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition a training set and write a condensed subset.
    Reduce(ReduceArgs),
    /// Score a condensed set with a nearest-neighbor classifier.
    Eval(EvalArgs),
    /// Write the cluster-size histogram of a partition.
    Stats(StatsArgs),
    /// Generate a synthetic blob dataset as IDX files.
    Synth(SynthArgs),
    /// Reduce and evaluate over several alphas, with size-matched random baselines.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,

    /// Dataset directory, or a parent holding mnist/, fmnist/, cifar10/ or synth/.
    #[arg(long, env = "HCONDENSE_DATA_DIR")]
    pub data_dir: PathBuf,

    /// Use only the first N training rows.
    #[arg(long)]
    pub limit: Option<usize>,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..1.0).contains(&a) {
        Ok(a)
    } else {
        Err(format!("alpha must lie in [0, 1), got {a}"))
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("{s:?} is not a count")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    #[arg(long)]
    pub method: Method,

    #[arg(long, default_value_t = 0.5, value_parser = parse_alpha)]
    pub alpha: f64,

    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub k_farthest: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Sample size for the random baseline (derived from --alpha if absent).
    #[arg(long)]
    pub count: Option<usize>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Manifest written by `reduce`.
    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub knn: usize,

    /// Use only the first N test rows.
    #[arg(long)]
    pub test_limit: Option<usize>,

    /// Report directory (defaults to the manifest's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long, value_enum, requires = "data_dir")]
    pub dataset: Option<DatasetKind>,

    #[arg(long)]
    pub data_dir: Option<PathBuf>,

    #[arg(long)]
    pub limit: Option<usize>,

    /// Partition dump to read instead of clustering.
    #[arg(long)]
    pub partition: Option<PathBuf>,

    /// Comma-separated bin edges.
    #[arg(long, value_delimiter = ',')]
    pub bins: Option<Vec<usize>>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3, value_parser = parse_positive)]
    pub classes: usize,

    #[arg(long, default_value_t = 100, value_parser = parse_positive)]
    pub per_class: usize,

    #[arg(long, default_value_t = 16, value_parser = parse_positive)]
    pub dim: usize,

    #[arg(long, default_value_t = 20.0)]
    pub spread: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Test rows per class, drawn around the same centers.
    #[arg(long, default_value_t = 20, value_parser = parse_positive)]
    pub test_per_class: usize,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', required = true)]
    pub method: Vec<Method>,

    /// Comma-separated alphas.
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha, required = true, num_args = 1..)]
    pub alphas: Vec<f64>,

    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub k_farthest: usize,

    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    pub knn: usize,

    #[arg(long, default_value_t = 3, value_parser = parse_positive)]
    pub baseline_seeds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub test_limit: Option<usize>,

    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(70);
        }
    }
    let result = match cli.command {
        Command::Reduce(a) => commands::reduce(&a).map(|p| println!("manifest\t{}", p.display())),
        Command::Eval(a) => commands::eval(&a).map(|p| println!("report\t{}", p.display())),
        Command::Stats(a) => commands::stats(&a).map(|p| println!("histogram\t{}", p.display())),
        Command::Synth(a) => commands::synth(&a).map(|p| println!("dataset\t{}", p.display())),
        Command::Sweep(a) => commands::sweep(&a).map(|p| println!("table\t{}", p.display())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<hcondense::Error>())
                .map_or(1, |c| c.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
