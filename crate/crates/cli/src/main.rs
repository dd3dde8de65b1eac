//! `slab-rte`: solve, verify, criticality and uq runs driven by a JSON config.
//!
//! Exit codes: 0 success, 1 a certificate failed, 2 bad config, 3 solver
//! failure. Stdout gets one JSON status line; diagnostics go to stderr.

// NaN must fail validation, hence `!(x > 0.0)` over `x <= 0.0`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::commands::Failure;
use crate::config::Command;

#[derive(Parser)]
#[command(
    name = "slab-rte",
    version,
    about = "Slab transport solver and certificate suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fixed-source problem: phi.csv, trace.csv, bounds.json.
    Solve(RunArgs),
    /// Certificate suite: verify_report.json.
    Verify(RunArgs),
    /// Criticality eigenproblem: criticality.json.
    Criticality(RunArgs),
    /// Monte Carlo over a random field: uq_samples.csv, uq_summary.json.
    Uq(RunArgs),
}

fn execute(command: Command, args: &RunArgs) -> Result<commands::Outcome, Failure> {
    let cfg = config::load(&args.config)?;
    let dir = commands::output_dir(&cfg, args.out.as_deref())?;
    commands::run(command, &cfg, &dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Criticality(a) => (Command::Criticality, a),
        Cmd::Uq(a) => (Command::Uq, a),
    };
    let name = format!("{command:?}").to_lowercase();
    let (code, status) = match execute(command, args) {
        Ok(out) => {
            let (code, status) = if !out.converged {
                eprintln!("solver did not converge within max_iter");
                (3, "not_converged")
            } else if !out.pass {
                (1, "fail")
            } else {
                (0, "ok")
            };
            let mut line = json!({
                "command": name,
                "status": status,
                "exit_code": code,
                "outputs": out.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            });
            if let Value::Object(map) = &mut line {
                map.extend(out.info);
            }
            (code, line)
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            let code = failure.exit_code();
            let mut line = json!({
                "command": name,
                "status": if code == 2 { "config_error" } else { "solver_error" },
                "exit_code": code,
                "message": failure.to_string(),
            });
            if let Failure::Config(e) = &failure {
                line["field"] = json!(e.path);
            }
            if let Failure::Solver(slab_rte::Error::Sample { index, .. }) = &failure {
                line["sample_index"] = json!(index);
            }
            (code, line)
        }
    };
    println!("{status}");
    ExitCode::from(code as u8)
}
