//! Command-line pipeline: synthetic scenes, tiling, splitting, training,
//! distillation, evaluation and reporting, all driven by one run config.

pub mod chart;
pub mod commands;
pub mod config;
pub mod error;
pub mod meta;

use std::path::Path;

pub use config::{Paths, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Tile,
    Split,
    Train,
    Distill,
    Evaluate,
    Report { force: bool },
}

/// Loads and validates the config, then runs one command.
pub fn run(command: Command, config_path: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let paths = Paths::new(config_path, &cfg);
    log::info!("config hash {}", cfg.hash());
    match command {
        Command::Synth => commands::cmd_synth(&cfg, &paths).map(drop),
        Command::Tile => commands::cmd_tile(&cfg, &paths).map(drop),
        Command::Split => commands::cmd_split(&cfg, &paths).map(drop),
        Command::Train => commands::cmd_train(&cfg, &paths).map(drop),
        Command::Distill => commands::cmd_distill(&cfg, &paths).map(drop),
        Command::Evaluate => commands::cmd_evaluate(&cfg, &paths).map(drop),
        Command::Report { force } => commands::cmd_report(&cfg, &paths, force).map(drop),
    }
}
