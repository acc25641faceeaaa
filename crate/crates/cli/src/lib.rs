//! Command-line front end: reads a TOML run configuration, dispatches one
//! subcommand and writes its reports atomically into the output directory.
//!
//! Exit status is 0 when every verdict passes, 2 when some verdict fails
//! and 1 on usage, configuration or precondition errors.

/// Prints a summary line unless `--quiet` was given.
macro_rules! say {
    ($ctx:expr, $($arg:tt)*) => {
        if !$ctx.quiet {
            println!($($arg)*);
        }
    };
}

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::Config;
use crate::output::OutDir;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] tugwar::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "tugwar", version, about = "Tug-of-war with noise: DPP solver, game simulator and verifiers")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true, env = "TUG_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Override a configuration value, e.g. `--set grid.h=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write reports without printing summaries.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// March the DPP and export value slices.
    Solve {
        /// Continue from a binary dump written by an earlier `solve`.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many slices and write a dump instead of the
        /// full report.
        #[arg(long)]
        max_slices: Option<usize>,
    },
    /// Monte Carlo play of the game.
    Simulate {
        /// Strategy kind of Player I (parameters via --set).
        #[arg(long)]
        strategy_i: Option<String>,
        /// Strategy kind of Player II.
        #[arg(long)]
        strategy_ii: Option<String>,
        /// Stopping rule kind.
        #[arg(long)]
        stopping: Option<String>,
        /// Trajectories per start.
        #[arg(long)]
        runs: Option<usize>,
        /// Record this many trajectories of the first start as CSV.
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Regularity probes on a solved value function.
    Probe {
        #[arg(long)]
        kind: Option<String>,
    },
    /// Sampled checks of the comparison-function inequalities.
    VerifyBarriers {
        /// Checks to run (repeatable); all when absent.
        #[arg(long = "check", value_enum)]
        checks: Vec<BarrierCheck>,
    },
    /// Convergence of the DPP values to a reference solution.
    Converge,
    /// Empirical tails against the concentration bounds.
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum BarrierCheck {
    PsiCases,
    PsiSubsolution,
    PsiDerivatives,
    Discriminant,
    HolderKey,
    HolderTime,
    TimeContinuum,
    TimeLattice,
}

impl BarrierCheck {
    pub fn all() -> Vec<BarrierCheck> {
        BarrierCheck::value_variants().to_vec()
    }
}

/// Everything a subcommand needs.
pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub out: OutDir,
    pub quiet: bool,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let mut overrides = shorthand_overrides(&cli.command);
    overrides.extend(cli.common.overrides.iter().cloned());
    let config = Config::load(cli.common.config.as_deref(), &overrides)?;
    let seed = cli.common.seed.or(config.seed).unwrap_or(0);
    let out = OutDir::create(&cli.common.out)?;
    let ctx = Context { config, seed, out, quiet: cli.common.quiet };
    match cli.common.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(k) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(k).build().map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| dispatch(&ctx, &cli.command))
        }
        None => dispatch(&ctx, &cli.command),
    }
}

/// Subcommand flags are sugar for configuration overrides; explicit
/// `--set` values are applied after them.
fn shorthand_overrides(cmd: &Command) -> Vec<String> {
    let mut o = Vec::new();
    let quoted = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
    match cmd {
        Command::Simulate { strategy_i, strategy_ii, stopping, runs, trajectories } => {
            if let Some(s) = strategy_i {
                o.push(format!("simulate.player_i.kind={}", quoted(s)));
            }
            if let Some(s) = strategy_ii {
                o.push(format!("simulate.player_ii.kind={}", quoted(s)));
            }
            if let Some(s) = stopping {
                o.push(format!("simulate.stopping.kind={}", quoted(s)));
            }
            if let Some(n) = runs {
                o.push(format!("simulate.runs={n}"));
            }
            if let Some(n) = trajectories {
                o.push(format!("simulate.trajectories={n}"));
            }
        }
        Command::Probe { kind: Some(k) } => o.push(format!("probe.kind={}", quoted(k))),
        _ => {}
    }
    o
}

fn dispatch(ctx: &Context, cmd: &Command) -> Result<bool, CliError> {
    match cmd {
        Command::Solve { resume, max_slices } => commands::solve(ctx, resume.as_deref(), *max_slices),
        Command::Simulate { .. } => commands::simulate(ctx),
        Command::Probe { .. } => commands::probe(ctx),
        Command::VerifyBarriers { checks } => {
            let mut checks = if checks.is_empty() { BarrierCheck::all() } else { checks.clone() };
            checks.sort();
            checks.dedup();
            commands::verify_barriers(ctx, &checks)
        }
        Command::Converge => commands::converge(ctx),
        Command::Bounds => commands::bounds(ctx),
    }
}
