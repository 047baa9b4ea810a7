use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayalign_cli::commands::{
    cmd_align, cmd_eval, cmd_export_ply, cmd_prune, cmd_rays, cmd_simulate, AlignArgs, EvalArgs,
    ExportPlyArgs, PruneArgs, RaysArgs, SimulateArgs,
};
use rayalign_cli::{CliError, CliResult};

/// Camera-agnostic multi-view alignment from pairwise predictions.
///
/// RAYALIGN_THREADS caps the worker threads used inside each command.
#[derive(Debug, Parser)]
#[command(name = "rayalign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic scene and synthesize pairwise predictions.
    Simulate(SimulateArgs),
    /// Filter inconsistent and low-overlap edges.
    Prune(PruneArgs),
    /// Globally align a pruned scene.
    Align(AlignArgs),
    /// Score an alignment against ground truth.
    Eval(EvalArgs),
    /// Convert a fused cloud to binary PLY.
    ExportPly(ExportPlyArgs),
    /// Dump a camera's ray field.
    Rays(RaysArgs),
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("RAYALIGN_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Input(format!("RAYALIGN_THREADS={v:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Prune(a) => cmd_prune(&a),
        Command::Align(a) => cmd_align(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::ExportPly(a) => cmd_export_ply(&a),
        Command::Rays(a) => cmd_rays(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
