//! Command-line front end: reproducible, configured subcommands over the
//! wordlist → cognates → character matrix → posterior trees → tree-distance
//! pipeline. Every run is a pure function of its input files, configuration,
//! and seed; reruns produce byte-identical outputs.

pub mod config;
pub mod error;
pub mod output;

mod commands;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::Config;
use error::{Result, EXIT_USAGE};

/// Resolved invocation shared by every subcommand.
pub struct Ctx {
    pub cfg: Config,
    /// Output directory (the `out` key).
    pub out: PathBuf,
    /// Master seed (the `seed` key); all randomness derives from it.
    pub seed: u64,
}

#[derive(Parser)]
#[command(
    name = "cogphylo",
    version,
    about = "From multilingual wordlists to Bayesian language phylogenies",
    after_help = "Configuration keys are flat `key = value` lines; see the README for the full \
                  list. Precedence: defaults < --config file < --set overrides < dedicated flags."
)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable; last value wins).
    #[arg(long = "set", global = true, value_name = "K=V")]
    set: Vec<String>,

    /// Master random seed (shorthand for --set seed=N).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory (shorthand for --set out=DIR).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Detection method to run; repeatable (shorthand for --set methods=...).
    #[arg(long = "method", global = true, value_name = "NAME")]
    method: Vec<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Detect cognate sets per method and score them against expert ids
    Detect,
    /// Convert a cognate partition into a binary character matrix
    Matrix,
    /// Sample posterior trees with two independent chains
    Mcmc,
    /// Score tree sample files against a reference tree
    Gqd,
    /// Run detect, evaluate, matrix, mcmc, and gqd end to end
    Pipeline,
    /// Simulate a character matrix from a random clocked tree
    Simulate,
}

/// Entry point for `main`: parses `std::env::args_os()`.
pub fn run_from_env() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

/// Runs the tool on explicit arguments and returns the process exit status:
/// 0 success, 1 usage/config error, 2 data error, 3 ran but unconverged.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let benign =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if benign { 0 } else { EXIT_USAGE };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    let mut cfg = Config::with_defaults();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for assignment in &cli.set {
        cfg.apply_set(assignment)?;
    }
    if let Some(seed) = cli.seed {
        cfg.force("seed", seed.to_string());
    }
    if let Some(out) = &cli.out {
        cfg.force("out", out.display().to_string());
    }
    if !cli.method.is_empty() {
        cfg.force("methods", cli.method.join(","));
    }

    let seed = cfg.u64("seed")?.expect("key has a default");
    let out = PathBuf::from(cfg.require_str("out")?);
    let ctx = Ctx { cfg, out, seed };
    match cli.command {
        Cmd::Detect => commands::detect::run(&ctx),
        Cmd::Matrix => commands::matrix::run(&ctx),
        Cmd::Mcmc => commands::mcmc::run(&ctx),
        Cmd::Gqd => commands::gqd::run(&ctx),
        Cmd::Pipeline => commands::pipeline::run(&ctx),
        Cmd::Simulate => commands::simulate::run(&ctx),
    }
}
