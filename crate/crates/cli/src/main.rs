//! `caginalp`: solve, check, verify and export runs of the thermal
//! phase-field system.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use caginalp_core::coupled_solver::Method;
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Failure;
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Homotopy,
    Stepping,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Homotopy => Method::Homotopy,
            MethodArg::Stepping => Method::Stepping,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "caginalp", version, about = "Thermal phase-field solver and property checker")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run even when the exponents fail the admissibility check.
    #[arg(long, global = true)]
    allow_unverified_exponents: bool,

    /// Overwrite an existing run directory.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the system and write `u.csv`, `phi.csv` and `manifest.json`.
    Solve,
    /// Estimate the structural constants of the nonlinearity.
    CheckHypotheses,
    /// Run the acceptance suite and write `suite.json`.
    Verify,
    /// Write plotting time series for a finished run.
    Plotdata {
        /// Run directory (defaults to the output directory).
        run_dir: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides { method: cli.method.map(Into::into), out: cli.out.clone(), seed: cli.seed });
    cfg.validate(cli.allow_unverified_exponents).map_err(Failure::Config)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve => commands::solve(&load(&cli)?, cli.force),
        Command::CheckHypotheses => commands::check_hypotheses_cmd(&load(&cli)?),
        Command::Verify => commands::verify(&load(&cli)?),
        Command::Plotdata { run_dir } => {
            let cfg_out = match &cli.config {
                Some(_) => Some(load(&cli)?.output.dir),
                None => cli.out.clone(),
            };
            commands::plotdata(&commands::default_run_dir(cfg_out, run_dir.clone()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAGINALP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
