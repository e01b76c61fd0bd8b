mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spdcforge_core::{Error, Result};

use config::RunConfig;

/// Simulate and analyse X-ray down-conversion correlation imaging runs.
#[derive(Debug, Parser)]
#[command(name = "spdcforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate detector hits with truth and linkage files.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulated time in hours.
        #[arg(long)]
        duration: Option<f64>,
        /// Background photons per down-converted photon.
        #[arg(long)]
        background_ratio: Option<f64>,
    },
    /// Cluster hits, pair the arms and write the pair tables and histograms.
    Process {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Build correlation images, corrected images, contours and the grid map.
    Image {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Identification probability surface and the heralded transmission study.
    Identify {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            duration,
            background_ratio,
        } => {
            let mut cfg = load(&common)?;
            if let Some(h) = duration {
                cfg.simulation.duration_hours = h;
            }
            if let Some(b) = background_ratio {
                cfg.simulation.background_ratio = b;
            }
            commands::simulate(&cfg)
        }
        Command::Process { common, events } => {
            let mut cfg = load(&common)?;
            if events.is_some() {
                cfg.inputs.events = events;
            }
            commands::process(&cfg)
        }
        Command::Image { common, pairs } => {
            let mut cfg = load(&common)?;
            if pairs.is_some() {
                cfg.inputs.pairs = pairs;
            }
            commands::image(&cfg)
        }
        Command::Identify { common } => commands::identify(&load(&common)?),
    }
}

/// 3 for unreadable or malformed input and failed writes, 2 for everything
/// the configuration or the data's geometry makes impossible.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Csv { .. } | Error::Parse { .. } | Error::Order { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
