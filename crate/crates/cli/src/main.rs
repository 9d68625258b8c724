mod commands;
mod config;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{Directions, RunConfig};

/// Efficiency spectra and capacities of multimode atomic-ensemble memories.
#[derive(Parser)]
#[command(name = "qmem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Per-m spectra and capacities at one (depth, Fresnel) point.
    Spectrum,
    /// Capacity versus Fresnel number at fixed depth, with a power-law fit.
    SweepFresnel,
    /// Mode count / capacity versus depth at fixed Fresnel number.
    SweepDepth,
    /// Cross-check leading efficiencies against time-domain integration.
    Oracle,
    /// Print the default configuration.
    DumpDefaults,
}

#[derive(Args)]
struct Common {
    /// TOML configuration (JSON if the extension is .json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cache directory.
    #[arg(long, global = true, env = "QMEM_CACHE_DIR")]
    cache: Option<PathBuf>,
    /// Disable the on-disk cache.
    #[arg(long, global = true, conflicts_with = "cache")]
    no_cache: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    direction: Option<Directions>,
    #[arg(long, global = true)]
    eta_min: Option<f64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(dir) = &self.cache {
            cfg.cache = true;
            cfg.cache_dir = dir.clone();
        }
        if self.no_cache {
            cfg.cache = false;
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        if let Some(d) = self.direction {
            cfg.direction = d;
        }
        if let Some(eta) = self.eta_min {
            cfg.eta_min = eta;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let run = || -> Result<(), Failure> {
        if let Command::DumpDefaults = cli.command {
            print!("{}", RunConfig::default().to_toml());
            return Ok(());
        }
        let cfg = cli.common.resolve()?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
        match cli.command {
            Command::Spectrum => commands::spectrum(cfg),
            Command::SweepFresnel => commands::sweep(cfg, commands::Axis::Fresnel),
            Command::SweepDepth => commands::sweep(cfg, commands::Axis::Depth),
            Command::Oracle => commands::oracle(cfg),
            Command::DumpDefaults => unreachable!(),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
