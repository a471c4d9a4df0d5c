//! `graphecon`: check, solve, verify and benchmark graphical exchange
//! economies with bounded resale.
//!
//! Exit codes: 0 pass, 1 failed check, 2 bad usage or input, 3 the solver's
//! non-termination guard fired.

mod bench;
mod common;
mod gen;
mod solve;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphecon_core::assumptions::check_assumptions;
use graphecon_core::{NumericMode, Rational};
use serde_json::json;

use common::{load_doc, parse_mode, resolve_mode, write_json, CliError};

#[derive(Parser, Debug)]
#[command(name = "graphecon", version, about = "Graphical exchange economies with resale")]
struct Cli {
    /// Numeric mode; overrides GRAPHECON_NUMERIC_MODE and the file's numeric_mode.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<NumericMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the standing assumptions of an economy.
    Check {
        economy: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the auction and write an approximate equilibrium certificate.
    Solve(solve::SolveArgs),
    /// Check a certificate against an economy.
    Verify(verify::VerifyArgs),
    /// Run a benchmark suite and write one CSV row per instance.
    Bench(bench::BenchArgs),
    /// Write a generated economy (and its analytic certificate, if any).
    Gen(gen::GenArgs),
}

fn check(mode: Option<NumericMode>, economy: PathBuf, out: Option<PathBuf>) -> Result<ExitCode, CliError> {
    let doc = load_doc(&economy)?;
    let report = match resolve_mode(mode, Some(&doc))? {
        NumericMode::Exact => check_assumptions(&common::economy::<Rational>(&doc)?),
        NumericMode::Float => check_assumptions(&common::economy::<f64>(&doc)?),
    };
    let passed = report.all_pass();
    write_json(out.as_deref(), &json!({ "all_pass": passed, "failing": report.failing(), "report": report }))?;
    Ok(common::pass_or_fail(passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mode = cli.mode;
    let outcome = match cli.command {
        Command::Check { economy, out } => check(mode, economy, out),
        Command::Solve(args) => solve::run(mode, args),
        Command::Verify(args) => verify::run(mode, args),
        Command::Bench(args) => bench::run(mode, args),
        Command::Gen(args) => gen::run(mode, args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("graphecon: {e}");
            ExitCode::from(e.code())
        }
    }
}
