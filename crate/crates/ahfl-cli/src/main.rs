//! `ahfl`: analyze, simulate, and train an asynchronous hierarchical
//! federated learning system from flat key-value configurations.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 configuration parse
//! error, 3 invalid parameter, 4 training divergence, 5 a simulation
//! tolerance check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ahfl::{Error, SystemConfig};

mod commands;
mod experiment;
mod plot;

#[derive(Parser)]
#[command(
    name = "ahfl",
    version,
    about = "Asynchronous hierarchical federated learning simulator"
)]
struct Cli {
    /// Configuration file; omitted keys fall back to built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (or set AHFL_OUT); defaults to ./out.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for experiment grids; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Cap run lengths for a fast smoke pass.
    #[arg(long, global = true)]
    quick: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form timing and staleness analysis.
    Analyze,
    /// Simulate cycle and version dynamics without learning, then check
    /// the empirical statistics against the closed forms.
    SimulateTiming {
        /// Cloud aggregations to simulate; overrides run.total_updates.
        #[arg(long)]
        updates: Option<u64>,
    },
    /// Run full training and export loss and staleness traces.
    Train,
    /// Run an experiment grid from a spec file and render SVG figures.
    Figure {
        /// Experiment spec file.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
    },
    /// Check a configuration and print its fully resolved form.
    Validate,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } => 2,
        Error::Invalid { .. } => 3,
        Error::Diverged { .. } | Error::NonFinite(_) | Error::NoConvergence(_) => 4,
        Error::InsufficientSamples(_) | Error::Io(_) => 1,
    }
}

fn load_config(cli: &Cli) -> ahfl::Result<SystemConfig> {
    let mut cfg = match &cli.config {
        Some(path) => SystemConfig::load(path)?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.quick {
        cfg.total_updates = cfg.total_updates.min(experiment::QUICK_UPDATES);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("AHFL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> ahfl::Result<u8> {
    match &cli.command {
        Command::Analyze => {
            let cfg = load_config(cli)?;
            print!("{}", commands::analyze(&cfg)?);
            Ok(0)
        }
        Command::SimulateTiming { updates } => {
            let cfg = load_config(cli)?;
            let (report, pass) = commands::simulate_timing(&cfg, *updates, &out_dir(cli))?;
            print!("{report}");
            Ok(if pass { 0 } else { 5 })
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            print!("{}", commands::train(&cfg, &out_dir(cli))?);
            Ok(0)
        }
        Command::Figure { spec } => {
            let report = commands::figure(spec, &out_dir(cli), cli.workers, cli.quick, cli.seed)?;
            print!("{report}");
            Ok(0)
        }
        Command::Validate => {
            let cfg = load_config(cli)?;
            print!("{}", commands::validate(&cfg));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
