//! Command-line harness: matrix classification, ergodicity sweeps,
//! optimizer experiments, and method comparisons, all driven by JSON
//! configs with fully materialized defaults.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "tvconsensus", version, about = "Stochastic-matrix products and decentralized subgradient experiments")]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for reports and trajectories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweep/comparison grids.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Re-read and schema-check every emitted file.
    #[arg(long, global = true)]
    validate: bool,

    /// Override the topology seed from the config.
    #[arg(long, global = true)]
    topology_seed: Option<u64>,

    /// Override the number of agents.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Override the topology mode (standard | identity_approaching).
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Override the extra-edge probability.
    #[arg(long, global = true)]
    extra_edge_prob: Option<f64>,

    /// Override the identity-approach rate exponent.
    #[arg(long, global = true)]
    epsilon_exponent: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a CSV matrix: stochasticity, connectivity, structural classes.
    Check {
        /// Square CSV matrix file.
        matrix: PathBuf,
    },
    /// Bound grids, product decay, and weight-estimate reports.
    Ergodicity,
    /// Run the configured methods and record trajectories.
    Optimize,
    /// Paired-seed comparison across at least two methods.
    Compare,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut cfg: ExperimentConfig =
                serde_json::from_str("{}").expect("empty config parses");
            cfg.materialize()?;
            cfg
        }
    };
    if let Some(seed) = cli.topology_seed {
        cfg.topology.seed = seed;
    }
    if let Some(n) = cli.n {
        cfg.topology.n = n;
    }
    if let Some(mode) = &cli.mode {
        cfg.topology.mode = mode.clone();
    }
    if let Some(p) = cli.extra_edge_prob {
        cfg.topology.extra_edge_prob = p;
    }
    if let Some(e) = cli.epsilon_exponent {
        cfg.topology.epsilon_exponent = e;
    }
    cfg.materialize()?;
    Ok(cfg)
}

fn require_out(cli: &Cli) -> Result<&PathBuf, CliError> {
    cli.out
        .as_ref()
        .ok_or_else(|| CliError::Config("--out <dir> is required for this command".into()))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let written = match &cli.command {
        Command::Check { matrix } => commands::cmd_check(matrix, cli.out.as_deref())?,
        Command::Ergodicity => {
            let cfg = load_config(cli)?;
            commands::cmd_ergodicity(&cfg, require_out(cli)?, cli.threads)?
        }
        Command::Optimize => {
            let cfg = load_config(cli)?;
            commands::cmd_optimize(&cfg, require_out(cli)?, cli.threads)?
        }
        Command::Compare => {
            let cfg = load_config(cli)?;
            commands::cmd_compare(&cfg, require_out(cli)?, cli.threads)?
        }
    };
    if cli.validate {
        for path in &written {
            io::validate_file(path).map_err(|e| CliError::Config(e.to_string()))?;
        }
        eprintln!("validated {} files", written.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
