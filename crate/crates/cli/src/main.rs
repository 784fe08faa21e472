//! `qca`: command-line runner for sweeps, exact evolution, classical
//! sampling, critical-line extraction and the contact-process dictionary.
//!
//! Exit codes: 0 success, 2 usage/config/capacity error, 3 numerical failure,
//! 1 for I/O problems while writing outputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qca_core::QcaError;

use config::{ClassicalArgs, CriticalArgs, ExactArgs, MapQcpArgs, MeanFieldArgs, SweepArgs};

#[derive(Parser, Debug)]
#[command(name = "qca", version, about = "Quantum cellular automata with tunable asynchronism")]
struct Cli {
    /// Directory for CSV, PGM and manifest outputs.
    #[arg(long, global = true, env = "QCA_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// JSON or TOML file with subcommand parameters (a run manifest also
    /// works); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps and sampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file stem (default: the subcommand name).
    #[arg(long, global = true)]
    name: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean-field stationary density over a (λ, p_branch) grid.
    Sweep(SweepArgs),
    /// Exact row evolution for small systems (dense channel or trajectories).
    Exact(ExactArgs),
    /// Monte Carlo of the synchronous probabilistic automaton.
    Classical(ClassicalArgs),
    /// Quantum contact-process rates reproducing the mean-field coefficients.
    MapQcp(MapQcpArgs),
    /// Critical line, transition order, λ* and g*.
    Critical(CriticalArgs),
    /// Single mean-field trajectory (n, x, y) per step.
    Meanfield(MeanFieldArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl From<QcaError> for CliError {
    fn from(e: QcaError) -> Self {
        match e {
            QcaError::InvalidParameter(_)
            | QcaError::Capacity { .. }
            | QcaError::Bracket(_)
            | QcaError::Undefined(_) => CliError::Usage(e.to_string()),
            QcaError::Numerical(_) | QcaError::Fit(_) | QcaError::Resample => CliError::Numerical(e.to_string()),
            QcaError::Io(_) | QcaError::Csv(_) | QcaError::Json(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Settings that shape where outputs go but not what they contain.
pub struct Context {
    pub out_dir: PathBuf,
    pub name: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let ctx = Context {
        out_dir: cli.out_dir,
        name: cli.name,
    };
    std::fs::create_dir_all(&ctx.out_dir)?;
    match cli.command {
        Command::Sweep(a) => commands::sweep(&ctx, config::merge(file, &a)?.resolve()),
        Command::Exact(a) => commands::exact(&ctx, config::merge(file, &a)?.resolve()),
        Command::Classical(a) => commands::classical(&ctx, config::merge(file, &a)?.resolve()),
        Command::MapQcp(a) => commands::map_qcp(&ctx, config::merge(file, &a)?.resolve()),
        Command::Critical(a) => commands::critical(&ctx, config::merge(file, &a)?.resolve()),
        Command::Meanfield(a) => commands::meanfield(&ctx, config::merge(file, &a)?.resolve()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(1)
        }
    }
}
