//! `mmo-decomp`: sweeps, fits and hybrid simulations from the command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::Output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "mmo-decomp", version, about = "Return-map decomposition of mixed-mode oscillations")]
struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Omit the timestamp comment line from CSV outputs.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the lambda value (or the lambda grid with a single value).
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Override mu.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full Koper system and report its MMO signature.
    KoperSim(Common),
    /// Sample singular maps over a lambda grid.
    MapsCompute(Common),
    /// Fit sampled maps and tabulate fit errors.
    MapsFit(Common),
    /// Locate lambda_r, fixed points and funnel margins.
    MmoAnalyze(Common),
    /// Run the local-global hybrid model.
    HybridRun(Common),
}

fn not_applicable(flag: &str, cmd: &str) -> CliError {
    CliError::Config(format!("--{flag} does not apply to {cmd}"))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MMO_DECOMP_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("MMO_DECOMP_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix_time={secs}")
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let output = |c: &Common| Output {
        dir: commands::output_dir(c.out.as_deref()),
        timestamp: (!cli.no_timestamp).then(timestamp),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::KoperSim(c) => {
            let mut cfg: config::KoperSimConfig = config::load(c.config.as_deref())?;
            if let Some(l) = c.lambda {
                cfg.params.lambda = l;
            }
            if let Some(m) = c.mu {
                cfg.params.mu = m;
            }
            cfg.validate()?;
            commands::koper_sim(&cfg, &output(c))
        }
        Command::MapsCompute(c) => {
            let mut cfg: config::MapsComputeConfig = config::load(c.config.as_deref())?;
            if let Some(l) = c.lambda {
                cfg.lambdas = vec![l];
            }
            if let Some(m) = c.mu {
                cfg.mu = m;
            }
            cfg.validate()?;
            commands::maps_compute(&cfg, &output(c))
        }
        Command::MapsFit(c) => {
            let cfg: config::MapsFitConfig = config::load(c.config.as_deref())?;
            if c.lambda.is_some() {
                return Err(not_applicable("lambda", "maps-fit"));
            }
            if c.mu.is_some() {
                return Err(not_applicable("mu", "maps-fit"));
            }
            cfg.validate()?;
            commands::maps_fit(&cfg, &output(c))
        }
        Command::MmoAnalyze(c) => {
            let mut cfg: config::MmoAnalyzeConfig = config::load(c.config.as_deref())?;
            if let Some(l) = c.lambda {
                cfg.lambdas = vec![l];
            }
            if let Some(m) = c.mu {
                cfg.mu = m;
            }
            cfg.validate()?;
            commands::mmo_analyze(&cfg, &output(c))
        }
        Command::HybridRun(c) => {
            let mut cfg: config::HybridRunConfig = config::load(c.config.as_deref())?;
            if c.lambda.is_some() {
                return Err(not_applicable("lambda", "hybrid-run"));
            }
            if let Some(m) = c.mu {
                match &mut cfg.local {
                    mmo_core::hybrid::LocalModel::FoldedNode(n) => n.mu = m,
                    mmo_core::hybrid::LocalModel::SingularHopf(_) => return Err(not_applicable("mu", "a singular-Hopf hybrid run")),
                }
            }
            cfg.validate()?;
            commands::hybrid_run(&cfg, &output(c))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmo-decomp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
