//! `kzopen`: batch runs of open-system Kibble–Zurek ramps.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::Session;
use config::Config;

/// Exit status when a computation ran but did not converge or a check failed.
const EXIT_UNCONVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "kzopen", version, about = "Kibble-Zurek ramps of open quadratic fermion chains")]
struct Cli {
    /// Experiment config; repeat for several experiments.
    #[arg(long = "config", short = 'c', global = true, value_name = "PATH")]
    configs: Vec<PathBuf>,

    /// Output root, overriding `output.dir` in the configs.
    #[arg(long, global = true, env = "KZOPEN_OUT", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all available cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Record in every output that no random numbers were used.
    #[arg(long, global = true)]
    seedless: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Excitation-density trajectory of one ramp (`ramp.t_f`).
    Ramp,
    /// E(t_f) over the sweep durations, resuming an existing file.
    Sweep,
    /// Power-law fit and local exponents of each sweep.
    Fit,
    /// Data collapse of the sweeps of all configs.
    Collapse {
        /// Base name of the collapse outputs.
        #[arg(long, default_value = "collapse")]
        name: String,
    },
    /// Rescaling identity (and optionally the coherent rewrite) for each config.
    Verify,
    /// Ramp class and predicted exponents, without simulating.
    Predict,
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    anyhow::ensure!(!cli.configs.is_empty(), "no experiment given; pass --config PATH");
    let configs = cli
        .configs
        .iter()
        .map(|p| Config::load(p))
        .collect::<Result<Vec<_>>>()?;
    let session = Session {
        out: cli.out,
        seedless: cli.seedless,
    };
    let mut ok = true;
    match cli.command {
        Command::Collapse { name } => {
            anyhow::ensure!(
                !name.is_empty() && !name.contains(['/', '\\']),
                "--name must be a plain file name"
            );
            ok = commands::collapse_curves(&session, &configs, &name)?;
        }
        cmd => {
            for cfg in &configs {
                ok &= match cmd {
                    Command::Ramp => commands::ramp(&session, cfg)?,
                    Command::Sweep => commands::sweep(&session, cfg)?,
                    Command::Fit => commands::fit(&session, cfg)?,
                    Command::Verify => commands::verify(&session, cfg)?,
                    Command::Predict => commands::predict(cfg)?,
                    Command::Collapse { .. } => unreachable!(),
                };
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("kzopen: some computations did not converge or failed their checks");
            ExitCode::from(EXIT_UNCONVERGED)
        }
        Err(e) => {
            eprintln!("kzopen: {e:#}");
            ExitCode::FAILURE
        }
    }
}
