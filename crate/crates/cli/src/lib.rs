//! Command-line front end for the fingerprint scattering pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;
mod svg;

use fpscat_core::{Error, Result};

use crate::args::{Cli, Command};
use crate::config::{load_config_file, PipelineConfig};

/// Builds the effective configuration: flags, then the config file, then
/// built-in defaults.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let common = cli.command.common();
    let file = match &common.config {
        Some(p) => load_config_file(p)?,
        None => Default::default(),
    };
    PipelineConfig::resolve(common.overrides().over(file))
}

/// Runs one command and returns the text summary for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(cli)?;
    Ok(match &cli.command {
        Command::Extract { dump_filters, .. } => commands::extract(&cfg, dump_filters.as_deref())?.to_string(),
        Command::Fit(_) => commands::fit(&cfg)?.to_string(),
        Command::Evaluate(_) => commands::evaluate(&cfg)?.to_string(),
        Command::SweepK(_) => commands::sweep_k(&cfg)?.to_string(),
        Command::Eer(_) => commands::eer(&cfg)?.to_string(),
    })
}

/// 1 for bad input or arguments, 2 for file and format problems, 3 for
/// numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::Validation(_) | Error::Parse { .. } => 1,
        Error::Io { .. } | Error::Image { .. } | Error::Format { .. } => 2,
        Error::Training { .. } | Error::Numerical(_) => 3,
    }
}
