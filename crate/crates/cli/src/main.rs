//! mvdakit: dataset generation, model fitting, cross-view evaluation,
//! parameter sweeps, and eigenspace perturbation reports for multi-view
//! discriminant analysis.
//!
//! Every command reads one JSON config (plus flag overrides), derives all
//! randomness from the single seed, and stamps outputs with the config
//! hash. Failures print a machine-parseable JSON error on stderr and exit
//! nonzero.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "mvdakit", version, about = "multi-view discriminant analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads (0 = automatic; MVDA_KIT_THREADS sets the default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// RBF/RFF bandwidth override.
    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// Random-feature count override.
    #[arg(long, global = true)]
    m: Option<usize>,

    /// Subspace dimension override.
    #[arg(long, global = true)]
    l: Option<usize>,

    /// Pencil regularizer override.
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Failure-probability budget for concentration bounds.
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Repeated-trial count for randomized runs.
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it with a manifest.
    Gen,
    /// Fit a projection model and save it.
    Fit,
    /// Evaluate a saved model on a probe/gallery view pair.
    Eval,
    /// Probe × gallery tables of best rank-1 rates per kernel.
    Bench,
    /// Long-format accuracy grid over kernels, sigma, m, and l.
    Sweep,
    /// Eigenspace perturbation experiment with bound evaluations.
    Perturb,
    /// Export structure/scatter matrices and the spectrum report.
    Dump,
}

fn run() -> anyhow::Result<()> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(anyhow::anyhow!(e.to_string())),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
        sigma: cli.sigma,
        m: cli.m,
        l: cli.l,
        epsilon: cli.epsilon,
        eta: cli.eta,
        trials: cli.trials,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Gen => commands::cmd_gen(&config, cli.force),
        Command::Fit => commands::cmd_fit(&config, cli.force),
        Command::Eval => commands::cmd_eval(&config),
        Command::Bench => commands::cmd_bench(&config),
        Command::Sweep => commands::cmd_sweep(&config),
        Command::Perturb => commands::cmd_perturb(&config),
        Command::Dump => commands::cmd_dump(&config, cli.force),
    }
}

fn main() {
    if let Err(e) = run() {
        let payload = json!({ "error": { "message": format!("{e:#}") } });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
