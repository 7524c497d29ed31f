//! `pglab`: exact policy-optimization experiments on tabular MDPs.
//!
//! Subcommands: `gen` (write problem files), `run` (iterate a method and
//! emit a CSV trace with per-iteration bound checks), `verify` (summarize
//! check slacks from a config re-run or a recorded trace), `rate` (fit
//! convergence-rate models), `plot` (render SVG convergence plots with
//! theoretical envelopes), `sweep` (parallel runs over step sizes).
//!
//! Exit codes: 0 success / all checks pass, 1 usage error, 2 a recorded
//! check violated its tolerance, 3 a non-finite value stopped a run.

mod commands;
mod config;
mod csvio;
mod plot;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{GenArgs, PlotArgs, RateArgs, RunFlags, SweepArgs, VerifyArgs};

#[derive(Parser)]
#[command(
    name = "pglab",
    version,
    about = "Exact policy-gradient experiments on tabular MDPs, with per-iteration bound verification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an MDP file (bandit fixture or seeded random MDP).
    Gen(GenArgs),
    /// Run a method and write the iteration trace as CSV.
    Run(RunFlags),
    /// Run (or load a trace) and report per-check pass/fail lines.
    Verify(VerifyArgs),
    /// Fit a convergence-rate model to a recorded trace.
    Rate(RateArgs),
    /// Render an SVG convergence plot from one or more traces.
    Plot(PlotArgs),
    /// Run the same experiment over several step sizes in parallel.
    Sweep(SweepArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Gen(args) => commands::cmd_gen(args),
        Cmd::Run(flags) => commands::cmd_run(flags),
        Cmd::Verify(args) => commands::cmd_verify(args),
        Cmd::Rate(args) => commands::cmd_rate(args),
        Cmd::Plot(args) => commands::cmd_plot(args),
        Cmd::Sweep(args) => commands::cmd_sweep(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
