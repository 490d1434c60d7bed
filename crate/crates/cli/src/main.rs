//! `qwork`: runs the work-distribution engines from a TOML config and
//! writes CSV datasets with a JSON metadata sidecar.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical-tolerance failure,
//! 1 I/O failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Setup;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qwork", version, about = "Finite-resolution quantum work distributions")]
struct Cli {
    /// TOML config, or the JSON metadata of an earlier run.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config field, e.g. `--set schedule.delta=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory; same as `--set output.dir=...`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form distributions, ledgers and fluctuation relations for the
    /// self-commuting system.
    Analytic,
    /// Driven-qubit distributions and ledgers for each configured theta.
    Qubit,
    /// Average-work corrections across theta and the ideal-limit ladder.
    Sweep,
    /// Oracle checks on the configured parameters.
    Verify,
    /// Print the resolved config as TOML.
    Config,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides;
    if let Some(dir) = &cli.out {
        overrides.push(format!("output.dir = {}", toml::Value::String(dir.display().to_string())));
    }
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    if let Command::Config = cli.command {
        cfg.validate()?;
        let text = toml::to_string_pretty(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    let setup = Setup::new(cfg)?;
    let meta = match cli.command {
        Command::Analytic => commands::analytic::run(&setup)?,
        Command::Qubit => commands::qubit::run(&setup)?,
        Command::Sweep => commands::sweep::run(&setup)?,
        Command::Verify => {
            let (meta, ok) = commands::verify::run(&setup)?;
            println!("metadata: {}", meta.display());
            if !ok {
                return Err(CliError::Numerical("one or more checks failed".into()));
            }
            return Ok(());
        }
        Command::Config => unreachable!("handled above"),
    };
    println!("metadata: {}", meta.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
