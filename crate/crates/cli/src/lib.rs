//! Command-line frontend: each subcommand resolves a [`config::RunConfig`],
//! delegates to `cuisine-core`, writes its outputs under `paths.out_dir` and
//! records the run in `run.json`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod runlog;

use args::{Cli, Command};
use error::Result;

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if cli.help_config {
        print!("{}", config::schema_text());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(error::CliError::Config("no subcommand given (see --help)".into()));
    };
    let name = command.name();
    let base = match &command.common().config {
        Some(path) => config::load_file(path, name)?,
        None => toml::Table::new(),
    };
    let cfg = config::resolve(base, &command.overrides()?)?;
    let artifacts = match &command {
        Command::Synth { .. } => commands::synth(&cfg)?,
        Command::TrainDetector { .. } => commands::train_detector(&cfg)?,
        Command::Calibrate { .. } => commands::calibrate(&cfg)?,
        Command::Search { .. } => commands::search(&cfg)?,
        Command::TrainClassifier { .. } => commands::train_classifier_cmd(&cfg)?,
        Command::Eval { with_latency, .. } => commands::eval(&cfg, *with_latency)?,
        Command::Ablate { .. } => commands::ablate(&cfg)?,
        Command::Infer { .. } => commands::infer(&cfg)?,
        Command::Latency { .. } => commands::latency(&cfg)?,
        Command::GradCheck { seeds, .. } => commands::grad_check(&cfg, *seeds)?,
    };
    runlog::record(&cfg.paths.out_dir, name, &cfg, &artifacts)?;
    Ok(())
}
