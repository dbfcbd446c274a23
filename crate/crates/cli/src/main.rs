//! `vervaat`: simulate paths, run Monte Carlo experiments, print constants.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "vervaat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Override one config key, applied after the file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one path and write its processes on a (y, t) grid
    Simulate,
    /// Run the Monte Carlo plan and write rates, slopes and KS tables
    Experiment,
    /// Print normalisations and limit constants for (tau, D, G)
    Constants {
        tau: Option<usize>,
        d: Option<f64>,
        /// Transformation G, e.g. quantile-compose(exponential(1)); `-` keeps the default
        g: Option<String>,
    },
    /// The i.i.d. reference run
    Baseline,
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Command::Constants { tau, d, g } = &cli.command {
        if let Some(t) = tau {
            cfg.tau = Some(*t);
        }
        if let Some(d) = d {
            cfg.d = *d;
        }
        if let Some(g) = g.as_deref().filter(|g| *g != "-") {
            cfg.set("g", g)?;
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Experiment => commands::experiment(&cfg),
        Command::Baseline => commands::baseline(&cfg),
        Command::Constants { .. } => {
            print!("{}", commands::constants(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vervaat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
