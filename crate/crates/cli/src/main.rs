use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{Flags, RunConfig};

/// Information-based PMU placement.
#[derive(Debug, Parser)]
#[command(name = "pmuplace", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Choose K PMU sites.
    Place {
        #[command(flatten)]
        flags: Flags,
    },
    /// Score a given set of candidate ids.
    Eval {
        #[command(flatten)]
        flags: Flags,
        /// Comma-separated candidate ids.
        #[arg(long, value_delimiter = ',')]
        set: Option<Vec<u32>>,
    },
    /// Objective curve over a range of budgets, optionally against exhaustive optima.
    Sweep {
        #[command(flatten)]
        flags: Flags,
    },
    /// Numerical checks: submodularity, cover equivalence, MMSE oracle, lazy greedy.
    Verify {
        #[command(flatten)]
        flags: Flags,
        /// Sampled chains per submodularity probe.
        #[arg(long)]
        trials: Option<usize>,
        /// Probe the negated objective; the checks are expected to fail.
        #[arg(long)]
        negate: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Place { flags } => commands::place(&RunConfig::resolve(&flags, None, None)?),
        Command::Eval { flags, set } => commands::eval(&RunConfig::resolve(&flags, set, None)?),
        Command::Sweep { flags } => commands::sweep(&RunConfig::resolve(&flags, None, None)?),
        Command::Verify { flags, trials, negate } => {
            commands::verify(&RunConfig::resolve(&flags, None, trials)?, negate)
        }
    }
}

/// 3 for a failed verification, 2 for a numerical failure, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::VerificationFailed>().is_some() {
        return 3;
    }
    match err.chain().find_map(|e| e.downcast_ref::<pmuplace::Error>()) {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
