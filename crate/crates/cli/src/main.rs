//! `backbone`: end-to-end pipeline for discovering and using network
//! backbones. Subcommands map onto the library stages: train a network,
//! extract transaction tables, mine backbones, compare against the exact
//! solvers, predict and repair with backbones, render visualizations, and
//! aggregate per-iteration reports.

mod commands;
mod config;
mod fail;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::fail::CliResult;

#[derive(Parser)]
#[command(
    name = "backbone",
    version,
    about = "Backbone discovery and explanation-augmented prediction for feed-forward networks"
)]
struct Cli {
    /// TOML config file mirroring the flag surface; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker-thread cap (env BACKBONE_THREADS is the fallback).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Dataset source shared by several subcommands: CSV or an IDX pair.
#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// CSV dataset: one instance per row, label in the last column.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// IDX image file (big-endian magic 0x00000803); pairs with --labels.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,

    /// IDX label file (big-endian magic 0x00000801).
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,

    /// Keep only these classes, relabeled by list position.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<usize>>,

    /// Keep only the first N instances (after class selection).
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Hidden-layer widths, e.g. 24,12 (at least two layers).
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    lr: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output weight file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Weight file produced by `train`.
    #[arg(long)]
    net: Option<PathBuf>,

    /// Neurons kept per hidden layer.
    #[arg(long)]
    r: Option<usize>,

    /// Directory for the per-concept transaction CSVs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long)]
    net: Option<PathBuf>,

    /// Transaction CSV file or a directory of them.
    #[arg(long)]
    tables: Option<PathBuf>,

    /// Minimum coverage the backbone must reach before termination applies.
    #[arg(long)]
    lambda: Option<f64>,

    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    net: Option<PathBuf>,

    /// Transaction CSV file or a directory of them.
    #[arg(long)]
    tables: Option<PathBuf>,

    /// strict, relaxed, or front. Defaults to relaxed when a budget flag is
    /// present, strict otherwise.
    #[arg(long)]
    mode: Option<String>,

    /// Per-concept forgotten-row slack.
    #[arg(long)]
    delta: Option<usize>,

    /// Per-pair shared-neuron slack.
    #[arg(long)]
    gamma: Option<usize>,

    /// Total forgotten-row cap.
    #[arg(long)]
    p1: Option<usize>,

    /// Total shared-neuron cap.
    #[arg(long)]
    p2: Option<usize>,

    /// Neuron-universe cap for the exact solvers.
    #[arg(long)]
    universe_cap: Option<usize>,

    /// DIMACS CNF input: run the 3SAT reduction feasibility check instead.
    #[arg(long)]
    cnf: Option<PathBuf>,

    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long)]
    net: Option<PathBuf>,

    /// Directory of backbone files produced by `mine`.
    #[arg(long)]
    backbones: Option<PathBuf>,

    #[arg(long)]
    r: Option<usize>,

    /// Per-instance prediction CSV (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EapArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long)]
    net: Option<PathBuf>,

    #[arg(long)]
    backbones: Option<PathBuf>,

    #[arg(long)]
    r: Option<usize>,

    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VizArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long)]
    net: Option<PathBuf>,

    /// Backbone file to visualize.
    #[arg(long)]
    backbone: Option<PathBuf>,

    /// Whitelist class; defaults to the backbone concept's class.
    #[arg(long)]
    class: Option<usize>,

    /// Whitelisted fraction of pixels.
    #[arg(long)]
    fraction: Option<f64>,

    #[arg(long)]
    swarm: Option<usize>,

    #[arg(long)]
    iterations: Option<usize>,

    #[arg(long)]
    inertia: Option<f64>,

    #[arg(long)]
    cognitive: Option<f64>,

    #[arg(long)]
    social: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Image shape as HxW, e.g. 28x28; defaults to a square when the input
    /// dimension is a perfect square.
    #[arg(long)]
    shape: Option<String>,

    /// Also render one image per backbone pattern, support in the filename.
    #[arg(long)]
    per_pattern: bool,

    /// Write PNG instead of PGM.
    #[arg(long)]
    png: bool,

    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Trace CSV files from `mine`, or directories of them; one per fold.
    #[arg(long, num_args = 1.., required = true)]
    traces: Vec<PathBuf>,

    /// Aggregated output CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a rectifier MLP on a labeled dataset.
    Train(TrainArgs),
    /// Build concept-labeled transaction tables from a network and dataset.
    Extract(ExtractArgs),
    /// Mine weighted backbones per concept and emit traces.
    Mine(MineArgs),
    /// Run the exact strict/relaxed solvers, front enumeration, or the 3SAT
    /// reduction.
    Oracle(OracleArgs),
    /// Classify instances with backbones alone.
    Predict(PredictArgs),
    /// Flag and correct likely mispredictions, reporting accuracies.
    Eap(EapArgs),
    /// Render activation-maximization images for a backbone.
    Viz(VizArgs),
    /// Aggregate per-iteration traces across folds.
    Report(ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let threads = cli
        .threads
        .or(config.threads)
        .or_else(|| {
            std::env::var("BACKBONE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        // Ignore the error if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match cli.command {
        Command::Train(args) => commands::train(args, &config),
        Command::Extract(args) => commands::extract(args, &config),
        Command::Mine(args) => commands::mine(args, &config),
        Command::Oracle(args) => commands::oracle(args, &config),
        Command::Predict(args) => commands::predict(args, &config),
        Command::Eap(args) => commands::eap(args, &config),
        Command::Viz(args) => commands::viz(args, &config),
        Command::Report(args) => commands::report(args, &config),
    }
}
