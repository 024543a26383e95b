//! `ntd`: generate data, train a sigmoid network with L1, decompose it into
//! non-negative tasks, then score and draw the result.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or validation failure.

mod decompose;
mod eval;
mod gen;
mod manifest;
mod report;
mod svg;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ntd_core::NtdError;

/// Marks an error as caused by bad flags or inputs (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(
    name = "ntd",
    version,
    about = "Non-negative task decomposition of trained sigmoid networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Train a network on a dataset directory.
    Train(train::TrainArgs),
    /// Compute the feature matrix V and factorize it.
    Decompose(decompose::DecomposeArgs),
    /// Render the tasks of a decomposition as SVG.
    Report(report::ReportArgs),
    /// Score a decomposition against planted blocks.
    Eval(eval::EvalArgs),
    /// Re-check recorded hashes and the objective trace of a stage directory.
    Verify(verify::VerifyArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Block-diagonal teacher network with planted tasks.
    Synthetic(gen::SyntheticArgs),
    /// Rasterized line drawings, one class per shape.
    Diagrams(gen::DiagramArgs),
    /// Sliding windows over columns of a CSV time series.
    Window(gen::WindowArgs),
}

#[derive(Args, Clone)]
pub struct OutDir {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("NTD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        Usage(format!(
            "NTD_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen(GenCommand::Synthetic(a)) => gen::synthetic(a),
        Command::Gen(GenCommand::Diagrams(a)) => gen::diagrams(a),
        Command::Gen(GenCommand::Window(a)) => gen::window(a),
        Command::Train(a) => train::run(a),
        Command::Decompose(a) => decompose::run(a),
        Command::Report(a) => report::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Verify(a) => verify::run(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<NtdError>() {
            return if e.is_usage() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
