use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crownscale_cli::{run, Command};

#[derive(Parser)]
#[command(name = "crownscale", version, about = "Tree species classification from crown-view and close-up imagery")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Upper bound on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ConfigArg {
    /// Run config (TOML, or JSON with a .json extension).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Sub {
    /// Generate a synthetic scene (rasters, crowns, close-ups).
    Synth(ConfigArg),
    /// Cut masked crown tiles for every polygon and date; ingest close-ups.
    Tile(ConfigArg),
    /// Stratified tree-level train/val/test split and species catalog.
    Split(ConfigArg),
    /// Fine-tune a backbone, optionally after k-fold cross-validation.
    Train(ConfigArg),
    /// Cross-scale distillation from a frozen teacher checkpoint.
    Distill(ConfigArg),
    /// Predict the test split and write metric reports.
    Evaluate(ConfigArg),
    /// Metric tables and long-tail chart from stored evaluations.
    Report {
        #[command(flatten)]
        config: ConfigArg,
        /// Combine inputs produced by different configs.
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        // Read by the tensor backend when it sizes its own pool.
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(4);
        }
    }
    let (command, config) = match cli.command {
        Sub::Synth(c) => (Command::Synth, c.config),
        Sub::Tile(c) => (Command::Tile, c.config),
        Sub::Split(c) => (Command::Split, c.config),
        Sub::Train(c) => (Command::Train, c.config),
        Sub::Distill(c) => (Command::Distill, c.config),
        Sub::Evaluate(c) => (Command::Evaluate, c.config),
        Sub::Report { config, force } => (Command::Report { force }, config.config),
    };
    match run(command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
