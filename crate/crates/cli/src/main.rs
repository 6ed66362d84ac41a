//! `frag`: solvers, Monte Carlo engines and spectral tools for pure
//! breakage, driven by a TOML run configuration.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use commands::{Context, Outcome, SimulationKind, SolverKind};
use error::{error_json, CliError};

#[derive(Parser)]
#[command(name = "frag", version, about = "Fragmentation toolkit")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo ensembles; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the daughter law normalisation and print the log-jump moments.
    Validate,
    /// Run a deterministic solver.
    Solve {
        #[arg(value_enum)]
        which: SolverKind,
    },
    /// Run a Monte Carlo engine.
    Simulate {
        #[arg(value_enum)]
        which: SimulationKind,
    },
    /// Calibrate and diagonalise the Airy sector.
    Spectrum,
    /// Mode-sum correlators from a mode covariance matrix.
    Correlate {
        #[arg(long)]
        covariance: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Compare two `xi,p` density files.
    Compare { a: PathBuf, b: PathBuf },
    /// Compare the Lindblad diagonal action with the jump generator.
    CheckLindblad,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        message: "this command needs --config".into(),
        line: None,
        column: None,
        field: Some("--config".into()),
    })?;
    Context::load(path, cli.seed, cli.out.as_deref())
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Compare { a, b } => commands::compare(a, b),
        Command::Validate => commands::validate(&context(cli)?),
        Command::Solve { which } => commands::solve(&context(cli)?, *which),
        Command::Simulate { which } => commands::simulate(&context(cli)?, *which),
        Command::Spectrum => commands::spectrum(&context(cli)?),
        Command::Correlate { covariance, times } => commands::correlate(&context(cli)?, covariance, times),
        Command::CheckLindblad => commands::lindblad(&context(cli)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let _ = writeln!(std::io::stdout(), "{}", outcome.stdout);
            match outcome.failure {
                None => ExitCode::SUCCESS,
                Some(message) => {
                    eprintln!("{}", error_json(&CliError::Failed(message)));
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
