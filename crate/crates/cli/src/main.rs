//! `plume-trace`: trace moving contaminant releases from sparse sensor
//! readings on a wind-driven advection–diffusion model.
//!
//! Exit codes: 0 on success (including inversions that stop at the
//! iteration cap), 1 for configuration or input errors, 2 when a linear
//! solve or optimization step breaks down numerically.

mod commands;
mod config;
mod tables;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "plume-trace", version, about = "Moving-source identification for advected plumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh, classify its inflow boundary, and write it out
    Mesh(CommonArgs),
    /// Simulate the configured release and record sensor measurements
    Simulate(CommonArgs),
    /// Fit release events to measurements and forecast the plume
    Invert(InvertArgs),
    /// Sweep diffusion coefficients against reference line readings
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (overrides PLUMETRACE_THREADS; default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides [output] dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Measurement CSV to fit (default: <output dir>/measurements.csv)
    #[arg(long)]
    measurements: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Reference line readings CSV (default: generate from reference_kappa)
    #[arg(long)]
    readings: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Numerical breakdowns map to 2; everything else (bad configs, missing
/// files, malformed tables) maps to 1.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<plumetrace_core::Error>() {
            if matches!(core, plumetrace_core::Error::Numerical(_)) {
                return 2;
            }
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Mesh(c) | Command::Simulate(c) => c,
        Command::Invert(args) => &args.common,
        Command::Calibrate(args) => &args.common,
    };
    init_threads(common.threads)?;
    let mut config = config::Config::load(&common.config)?;
    if let Some(out) = &common.out {
        config.output.dir = std::path::absolute(out)
            .with_context(|| format!("cannot resolve output directory {}", out.display()))?;
    }
    match &cli.command {
        Command::Mesh(_) => commands::run_mesh(&config),
        Command::Simulate(_) => commands::run_simulate(&config),
        Command::Invert(args) => commands::run_invert(&config, args.measurements.as_deref()),
        Command::Calibrate(args) => commands::run_calibrate(&config, args.readings.as_deref()),
    }
}

/// Resolution order: `--threads`, then PLUMETRACE_THREADS, then rayon's
/// default (all cores).
fn init_threads(flag: Option<usize>) -> Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("PLUMETRACE_THREADS") {
            Ok(text) => Some(
                text.trim()
                    .parse::<usize>()
                    .with_context(|| format!("PLUMETRACE_THREADS={text:?} is not a thread count"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            anyhow::bail!("thread count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool already initialized")?;
    }
    Ok(())
}
