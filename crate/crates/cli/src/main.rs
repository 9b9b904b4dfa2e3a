use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use groupoid_vi::{configure_threads, run, Command};

#[derive(Parser)]
#[command(name = "groupoid-vi", version, about = "Variational integrator experiments on Lie groupoids")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Iterate a discrete scheme and write the trajectory.
    Simulate(Io),
    /// Measure convergence orders over an h-grid.
    Order(Io),
    /// Exact discrete Lagrangian and Legendre transforms for listed arrows.
    Exact(Io),
    /// Sampled existence/uniqueness certificate for the two-point problem.
    Certify(Io),
    /// Identity checks for the exact discrete Lagrangian.
    Check(Io),
}

#[derive(clap::Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage_error { 1 } else { 0 });
        }
    };
    let (command, io) = match cli.command {
        Cmd::Simulate(io) => (Command::Simulate, io),
        Cmd::Order(io) => (Command::Order, io),
        Cmd::Exact(io) => (Command::Exact, io),
        Cmd::Certify(io) => (Command::Certify, io),
        Cmd::Check(io) => (Command::Check, io),
    };
    let threads = std::env::var("GVI_THREADS").ok();
    let result = configure_threads(threads.as_deref()).and_then(|()| run(command, &io.config, &io.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groupoid-vi {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
