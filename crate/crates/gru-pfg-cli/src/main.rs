use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gru_pfg::baselines::VariantKind;
use gru_pfg_cli::commands::{
    self, AblateArgs, EvalArgs, GradcheckArgs, SplitChoice, SynthArgs, TrainArgs,
    GRADCHECK_TOLERANCE,
};
use gru_pfg_cli::exit_code;

/// Stock-trend prediction with GRU factor extraction and inter-stock
/// correlation graphs: data generation, training, evaluation, ablations
/// and gradient checks.
#[derive(Parser)]
#[command(name = "gru-pfg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic factor panel with planted group structure.
    Synth {
        /// Number of stocks.
        #[arg(long)]
        stocks: usize,
        /// Number of trading days.
        #[arg(long)]
        days: usize,
        /// Number of latent driver groups.
        #[arg(long)]
        groups: usize,
        /// Signal strength in [0, 1].
        #[arg(long)]
        signal: f64,
        /// Noise standard deviation.
        #[arg(long)]
        noise: f64,
        /// RNG seed (PFG_SEED overrides).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output panel CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a panel's train split, early-stopping on the
    /// validation split.
    Train {
        /// Panel CSV path.
        #[arg(long)]
        panel: PathBuf,
        /// Config file (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (checkpoint.bin, train_log.csv, manifest.txt).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on one split of a panel.
    Eval {
        /// Panel CSV path.
        #[arg(long)]
        panel: PathBuf,
        /// Checkpoint file produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which split to evaluate.
        #[arg(long, value_enum)]
        split: SplitChoice,
        /// Config file (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (metrics.csv, monthly.csv, manifest.txt).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Finite-difference check of the analytic gradients on a random batch.
    Gradcheck {
        /// Cross-section size of the random batch.
        #[arg(long)]
        stocks: usize,
        /// GRU hidden width.
        #[arg(long)]
        dims: usize,
        /// RNG seed (PFG_SEED overrides).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model variant to check.
        #[arg(long, default_value = "gru-pfg")]
        kind: String,
    },
    /// Train and evaluate several variants across seeds; emits a
    /// comparison table with across-seed std in parentheses.
    Ablate {
        /// Panel CSV path.
        #[arg(long)]
        panel: PathBuf,
        /// Config file (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated variant kinds (e.g. gru,gru-pfg).
        #[arg(long)]
        variants: String,
        /// Comma-separated seeds (e.g. 1,2,3,4,5).
        #[arg(long)]
        seeds: String,
        /// Output directory (ablation.csv, per-cell subdirectories).
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> gru_pfg::Result<ExitCode> {
    match cli.command {
        Command::Synth {
            stocks,
            days,
            groups,
            signal,
            noise,
            seed,
            out,
        } => {
            commands::synth(&SynthArgs {
                stocks,
                days,
                groups,
                signal,
                noise,
                seed,
                out,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            panel,
            config,
            out_dir,
        } => {
            commands::train_cmd(&TrainArgs {
                panel,
                config,
                out_dir,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            panel,
            checkpoint,
            split,
            config,
            out_dir,
        } => {
            commands::eval_cmd(&EvalArgs {
                panel,
                checkpoint,
                split,
                config,
                out_dir,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            stocks,
            dims,
            seed,
            kind,
        } => {
            let kind: VariantKind = kind.parse()?;
            let worst = commands::gradcheck_cmd(&GradcheckArgs {
                stocks,
                dims,
                seed,
                kind,
            })?;
            if worst > GRADCHECK_TOLERANCE {
                eprintln!("gradient check failed: {worst:e} > {GRADCHECK_TOLERANCE:e}");
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate {
            panel,
            config,
            variants,
            seeds,
            out_dir,
        } => {
            commands::ablate_cmd(&AblateArgs {
                panel,
                config,
                variants,
                seeds,
                out_dir,
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
