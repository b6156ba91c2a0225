use clap::{Parser, Subcommand};
use opcnn_cli::bounds_cmd::run_bounds;
use opcnn_cli::config::parse_spec;
use opcnn_cli::runner::{run_evaluate, run_generate, run_rate_sweep, run_train};
use opcnn_cli::verify::{print_report, run_suite};
use std::path::PathBuf;
use std::process::ExitCode;

/// Convolutional ensemble classifiers trained by projected SGD: synthetic
/// data generation, training, evaluation, rate sweeps, verification suites
/// and bound audits.
///
/// The architecture schedule constants c3, c5, c6, c7 default to desk-scale
/// values (the analysis leaves them unspecified); ensemble size, init bound
/// and step counts likewise default to desk-scale replacements for the
/// theory-scale settings, which are computationally infeasible.
#[derive(Parser)]
#[command(name = "opcnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled dataset from the configured hierarchical model.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the ensemble with projected SGD and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a fresh test set.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the rate sweep over the configured sample sizes and seeds.
    RateSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named verification suite
    /// (gadgets|gradients|projections|bounds|lemma1|taylor).
    Verify { suite: String },
    /// Evaluate the capacity/stability bounds on the configured
    /// architecture and write the report rows.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_spec(path: &PathBuf) -> Result<(opcnn_cli::config::ExperimentSpec, String), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let spec = parse_spec(&text)?;
    Ok((spec, text))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<bool, String> = match cli.command {
        Command::Generate { config, out, seed } => load_spec(&config).and_then(|(spec, text)| {
            run_generate(&spec, &text, &out, seed)
                .map(|_| true)
                .map_err(|e| e.to_string())
        }),
        Command::Train { config, out, seed } => load_spec(&config).and_then(|(spec, text)| {
            run_train(&spec, &text, &out, seed)
                .map(|_| true)
                .map_err(|e| e.to_string())
        }),
        Command::Evaluate { config, out, seed } => load_spec(&config).and_then(|(spec, text)| {
            run_evaluate(&spec, &text, &out, seed)
                .map(|_| true)
                .map_err(|e| e.to_string())
        }),
        Command::RateSweep { config, out } => load_spec(&config).and_then(|(spec, text)| {
            run_rate_sweep(&spec, &text, &out)
                .map(|_| true)
                .map_err(|e| e.to_string())
        }),
        Command::Verify { suite } => run_suite(&suite).map(|checks| print_report(&suite, &checks)),
        Command::Bounds { config, out, seed } => load_spec(&config).and_then(|(spec, text)| {
            run_bounds(&spec, &text, &out, seed)
                .map(|_| true)
                .map_err(|e| e.to_string())
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
