mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dgsem_tau::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(_) | CliError::Io(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

/// Anisotropic DGSEM solver with truncation-error estimation and p-adaptation
/// for the manufactured Navier-Stokes case.
#[derive(Debug, Parser)]
#[command(name = "dgsem-tau", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Steady-state residual tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Converge the reference solution.
    Solve,
    /// Exact, high-order, low-order and full-product maps of one element.
    Map {
        #[arg(long)]
        element: Option<usize>,
        /// Use this snapshot instead of solving.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Order plan for a single threshold.
    Adapt {
        #[arg(long)]
        tau_max: Option<f64>,
        /// Estimator flavor driving the maps.
        #[arg(long)]
        flavor: Option<String>,
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Skip the re-solve on the adapted orders.
        #[arg(long)]
        no_resolve: bool,
    },
    /// Plans and achieved truncation error over log-spaced thresholds.
    Sweep {
        #[arg(long)]
        flavor: Option<String>,
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        no_resolve: bool,
    },
    /// Finite-difference check of the manufactured source term.
    VerifySource {
        /// Negative control: use the source with the exponent sign reversed.
        #[arg(long)]
        flip_exponent: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = RunConfig::parse_overrides(&cli.set)?;
    let mut flag = |key: &str, value: toml::Value| overrides.push((key.to_string(), value));
    if let Some(j) = cli.jobs {
        flag("jobs", toml::Value::Integer(j as i64));
    }
    if let Some(d) = &cli.output_dir {
        flag("output_dir", toml::Value::String(d.display().to_string()));
    }
    if let Some(t) = cli.tolerance {
        flag("tolerance", toml::Value::Float(t));
    }
    match &cli.command {
        Command::Map {
            element: Some(e), ..
        } => flag("element", toml::Value::Integer(*e as i64)),
        Command::Adapt {
            tau_max,
            flavor,
            no_resolve,
            ..
        } => {
            if let Some(t) = tau_max {
                flag("tau_max", toml::Value::Float(*t));
            }
            if let Some(f) = flavor {
                flag("flavor", toml::Value::String(f.clone()));
            }
            if *no_resolve {
                flag("resolve", toml::Value::Boolean(false));
            }
        }
        Command::Sweep {
            flavor, no_resolve, ..
        } => {
            if let Some(f) = flavor {
                flag("flavor", toml::Value::String(f.clone()));
            }
            if *no_resolve {
                flag("resolve", toml::Value::Boolean(false));
            }
        }
        _ => {}
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Solve => commands::solve(&cfg).map(|_| ()),
        Command::Map { solution, .. } => commands::map(&cfg, solution.as_deref()),
        Command::Adapt { solution, .. } => commands::adapt(&cfg, solution.as_deref()),
        Command::Sweep { solution, .. } => commands::sweep(&cfg, solution.as_deref()),
        Command::VerifySource { flip_exponent } => commands::verify_source(&cfg, flip_exponent),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
