//! `ifm`: run the interaction-free measurement experiments and write tables.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration, 3 numeric failure.

mod commands;
mod grid;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::commands::Failure;
use crate::table::Format;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "ifm", version, about = "Interaction-free measurements of semitransparent samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct Common {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads (default: all cores). Does not change results.
    #[arg(long, global = true)]
    #[serde(skip)]
    threads: Option<usize>,

    /// Output file (default: stdout).
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// State probabilities after every round trip.
    Evolution(commands::EvolutionArgs),
    /// Final probabilities over a transparency grid.
    Sweep(commands::SweepArgs),
    /// Optimal round trips and loss versus contrast.
    Contrast(commands::ContrastArgs),
    /// Monte Carlo discrimination between two transparencies.
    Discriminate(commands::DiscriminateArgs),
    /// Minimum mean loss for a given error probability.
    Bound(commands::BoundArgs),
    /// Expected loss for measuring a transparency to a given precision.
    Precision(commands::PrecisionArgs),
    /// Final probabilities versus the sample phase shift.
    Phase(commands::PhaseArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Evolution(_) => "evolution",
            Command::Sweep(_) => "sweep",
            Command::Contrast(_) => "contrast",
            Command::Discriminate(_) => "discriminate",
            Command::Bound(_) => "bound",
            Command::Precision(_) => "precision",
            Command::Phase(_) => "phase",
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.common.threads {
        if threads == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    let seed = cli.common.seed;
    let table = match &cli.command {
        Command::Evolution(a) => commands::evolution(a)?,
        Command::Sweep(a) => commands::sweep(a)?,
        Command::Contrast(a) => commands::contrast(a)?,
        Command::Discriminate(a) => commands::discriminate(a, seed)?,
        Command::Bound(a) => commands::bound(a)?,
        Command::Precision(a) => commands::precision(a)?,
        Command::Phase(a) => commands::phase(a)?,
    };
    let config = serde_json::to_value(&cli.command).map_err(|e| Failure::Io(e.to_string()))?;
    let metadata = json!({
        "tool": "ifm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "seed": seed,
        "config": config.get(cli.command.name()).cloned().unwrap_or(config),
    });
    let io_err = |e: io::Error| Failure::Io(e.to_string());
    match &cli.common.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
            table.write(&mut w, cli.common.format, &metadata).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            table.write(&mut w, cli.common.format, &metadata).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
