//! `mirrorfdr`: simulate data, select features, run benchmark grids.
//!
//! Feature indices in reports are 1-based.

mod bench;
mod parse;
mod runfile;
mod select;
mod simulate;
mod table;

use std::fmt::Display;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mirrorfdr", version, about = "FDR-controlled feature selection with mirror statistics")]
struct Cli {
    /// Worker threads.
    #[arg(long, global = true, env = "MIRRORFDR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset and its truth sidecar.
    Simulate(simulate::SimulateArgs),
    /// Run a selector on a CSV dataset.
    Select(select::SelectArgs),
    /// Run a benchmark grid from a run file.
    Bench(bench::BenchArgs),
}

/// Failure with its exit code: 2 for usage or validation, 3 when a method fails.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Method(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Method(_) => 3,
        }
    }
}

pub trait ResultExt<T> {
    fn usage(self) -> Result<T, Failure>;
    fn method(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn method(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Method(e.into()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().usage()?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Select(a) => select::run(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (Failure::Usage(err) | Failure::Method(err)) = &e;
            eprintln!("error: {err:#}");
            ExitCode::from(e.code())
        }
    }
}
