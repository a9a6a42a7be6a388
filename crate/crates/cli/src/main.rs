mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

/// Input file that does not exist; reported with exit code 2.
#[derive(Debug)]
pub struct MissingFile(pub PathBuf);

impl fmt::Display for MissingFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingFile {}

#[derive(Debug, Parser)]
#[command(name = "adformer", version, about = "Passenger-demand forecasting with an aggregation differential transformer")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "adformer.json")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bin the trips CSV into a demand archive.
    Ingest,
    /// Build the region hierarchy from the training split.
    Cluster,
    /// Train and write the best checkpoint plus the epoch history.
    Train {
        /// Overrides train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate the checkpoint and the baselines on the test split.
    Eval,
    /// Forecast the horizon following a start timestamp.
    Forecast {
        /// First forecast bin: RFC 3339, `YYYY-MM-DD HH:MM:SS` (archive offset) or epoch seconds.
        #[arg(long)]
        start: String,
        /// Output CSV (default: <output_dir>/forecast.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Train { epochs: Some(e) } = cli.command {
        config.train.epochs = e;
    }
    config.sync();
    config.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    eprintln!("adformer {:?} seed={}", cli.command, config.seed);
    match &cli.command {
        Command::Ingest => commands::ingest(&config),
        Command::Cluster => commands::cluster(&config),
        Command::Train { .. } => commands::train_cmd(&config),
        Command::Eval => commands::eval(&config),
        Command::Forecast { start, output } => commands::forecast(&config, start, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<MissingFile>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
