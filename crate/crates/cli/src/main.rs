use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neuralff_cli::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_plot, cmd_sweep_p, cmd_train, CliError};
use neuralff_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "neuralff", version, about = "Neural Ford-Fulkerson experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Directory holding manifest.txt and the datasets.
    #[arg(long, global = true, default_value = "data")]
    manifest: PathBuf,
    /// Trained checkpoint (JSON).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets and their manifest into --out.
    Gen,
    /// Train on the datasets in --manifest; writes checkpoint and history.
    Train,
    /// Maximum-flow accuracy grid over heuristics and scales.
    Eval,
    /// Classical-bottleneck / classical-augment ablation grid.
    Ablate,
    /// Accuracy on the edge-probability sweep datasets.
    SweepP,
    /// Render training curves from history CSV files.
    Plot {
        /// History CSV files written by `train`.
        #[arg(long = "history", required = true)]
        histories: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let checkpoint = || {
        cli.checkpoint.clone().ok_or_else(|| CliError::Config("--checkpoint is required for this command".into()))
    };
    match &cli.command {
        Command::Gen => {
            let m = cmd_gen(&cfg, &cli.out)?;
            eprintln!("wrote {} datasets to {}", m.entries.len(), cli.out.display());
        }
        Command::Train => {
            let path = cmd_train(&cfg, &cli.manifest, &cli.out)?;
            eprintln!("checkpoint: {}", path.display());
        }
        Command::Eval => {
            let path = cmd_eval(&cfg, &checkpoint()?, &cli.manifest, &cli.out)?;
            eprintln!("results: {}", path.display());
        }
        Command::Ablate => {
            let path = cmd_ablate(&cfg, &checkpoint()?, &cli.manifest, &cli.out)?;
            eprintln!("results: {}", path.display());
        }
        Command::SweepP => {
            let path = cmd_sweep_p(&cfg, &checkpoint()?, &cli.manifest, &cli.out)?;
            eprintln!("results: {}", path.display());
        }
        Command::Plot { histories } => {
            for path in cmd_plot(histories, &cli.out)? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
