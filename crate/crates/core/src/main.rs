use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use gformula::config::{Mode, RunConfig};
use gformula::runner::{execute, RunError, RunOptions};

/// Mediational g-formula with a time-varying mediator and competing death.
#[derive(Debug, Parser)]
#[command(name = "gformula", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the bootstrap and simulation seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// competing_risks, conditional_on_survival, both or simulate.
    #[arg(long)]
    mode: Option<Mode>,
    /// Write the fitted full-cohort models to this JSON file.
    #[arg(long)]
    dump_models: Option<PathBuf>,
    /// No progress or warnings on stderr.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.bootstrap.master_seed = seed;
        config.simulate.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    let options = RunOptions {
        quiet: cli.quiet,
        dump_models: cli.dump_models,
    };
    execute(&config, &options).map(|_| ())
}
