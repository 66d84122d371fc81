use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpe_dss_cli::{parse_vary, solve, sweep, CliResult};

/// Stationary densities of the nonlinear Ornstein–Uhlenbeck model from a
/// Hermite-projected Fokker–Planck operator.
#[derive(Parser)]
#[command(name = "fpe-dss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the method selected in the config.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat a run over a grid of overridden keys.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `KEY=v1,v2,...`; repeat for a cartesian product.
        #[arg(long = "vary", required = true)]
        vary: Vec<String>,
    },
    /// Exact, classical and Langevin side by side, plus enabled quantum methods.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Solve { config } => solve(&config, false),
        Command::Compare { config } => solve(&config, true),
        Command::Sweep { config, vary } => {
            let varies = vary.iter().map(|v| parse_vary(v)).collect::<CliResult<Vec<_>>>()?;
            sweep(&config, &varies)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.summary());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
