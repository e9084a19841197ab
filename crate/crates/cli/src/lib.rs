//! Command-line front end: configuration, subcommand dispatch and artifact emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::commands::Outcome;
use crate::config::{Preset, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Facelift,
    Solve,
    Ngp,
    Firstbest,
    Simulate,
    Cara,
    Figures,
}

/// Solver for the principal-agent problem with distinct discount rates.
///
/// Exit status: 0 on success, 2 when the solver reports an unresolved outcome
/// (no tangency within the horizon), 1 on error.
#[derive(Debug, Parser)]
#[command(name = "pasolve", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Subcommand,

    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Named parameter set; replaces the `model` and `cost` sections. `figures` without a
    /// preset runs all four.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

/// Reads the config file (if any), then applies `--preset` and `--out`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
            RunConfig::from_json_str(&text)?
        }
        None if cli.preset.is_some() || cli.command == Subcommand::Figures => RunConfig::from_value(&serde_json::json!({}))?,
        None => return Err(CliError::Config("--config is required unless --preset is given".into())),
    };
    if let Some(p) = cli.preset {
        p.apply(&mut cfg);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
        cfg.defaulted.retain(|k| k != "output.dir");
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Subcommand::Facelift => commands::cmd_facelift(&cfg),
        Subcommand::Solve => commands::cmd_solve(&cfg),
        Subcommand::Ngp => commands::cmd_ngp(&cfg),
        Subcommand::Firstbest => commands::cmd_firstbest(&cfg),
        Subcommand::Simulate => commands::cmd_simulate(&cfg),
        Subcommand::Cara => commands::cmd_cara(&cfg),
        Subcommand::Figures => {
            let presets = cli.preset.map_or(Preset::ALL.to_vec(), |p| vec![p]);
            commands::cmd_figures(&cfg, &presets)
        }
    }
}
