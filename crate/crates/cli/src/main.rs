//! `rtaprop`: batch front end for arrival-time uncertainty propagation.
//!
//! Exit status: 0 success, 2 bad input or usage, 3 numerical failure, 4 output could not be
//! written. Logging goes to stderr and is controlled by `RUST_LOG`.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rtaprop", version, about = "Propagate arrival-time uncertainty along 4D flight plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter trace and per-waypoint RTA bounds for one plan.
    Propagate {
        #[arg(long)]
        plan: PathBuf,
        /// Also write the fitted trajectory sampled every STRIDE seconds.
        #[arg(long, value_name = "STRIDE")]
        dump_spline: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Blended filter next to the gated filter, the uLPA envelope and Monte Carlo.
    Compare {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate Q_max from ADS-B tracks and score arrival predictions.
    Tune {
        /// Directory of `*.csv` tracks, one flight per file.
        #[arg(long)]
        adsb: PathBuf,
        /// Directory of `*.toml` plans; `plan_id` must match the track's `flight_id`.
        #[arg(long)]
        plans: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Numerical(anyhow::Error),
    Output(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Output(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Numerical(e) | Failure::Output(e) => e,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Propagate { common, .. } | Command::Compare { common, .. } | Command::Tune { common, .. } => common,
    };
    if let Some(jobs) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Propagate { plan, dump_spline, common } => commands::propagate(plan, *dump_spline, common),
        Command::Compare { plan, common } => commands::compare(plan, common),
        Command::Tune { adsb, plans, common } => commands::tune(adsb, plans, common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
