//! `gcf-lab`: run, verify and cross-check alpha-power Gauss curvature flows.
//!
//! Exit codes: 0 ok, 1 usage or configuration error, 2 solver abort,
//! 3 verification failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use gcf_core::GcfError;

use commands::{Output, SolverAbort, Verdict};
use config::{Config, Tolerances};

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "gcf-lab", version, about = "Numerical laboratory for alpha-power Gauss curvature flow of convex graphs")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Override a named tolerance, e.g. `tol_disc=1e-2`.
    #[arg(long = "tol-override", global = true, value_name = "NAME=VAL")]
    tol_override: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve initial data; writes trace, checkpoint and summary.
    Run(Overrides),
    /// Check the estimate monitors (and residual orders) on stored traces.
    Verify(Overrides),
    /// Closed-curve approximation suite for planar data.
    Double(Overrides),
    /// Barrier supersolution and domain-preservation checks.
    Barrier(Overrides),
    /// Exact solutions: shrinking sphere, translating soliton.
    Oracle(Overrides),
}

#[derive(Args, Debug)]
struct Overrides {
    /// Configuration overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    set: Vec<String>,
}

/// Splits `--key value` pairs; global flags that land here after the
/// subcommand are routed back to `cli`.
fn split_overrides(cli: &mut Cli, args: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            bail!("unexpected argument '{a}'; overrides take the form --key value");
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match it.next() {
                Some(v) => (body.to_string(), v.clone()),
                None => bail!("override --{body} is missing a value"),
            },
        };
        match key.as_str() {
            "config" => cli.config = Some(PathBuf::from(value)),
            "out" => cli.out = PathBuf::from(value),
            "threads" => cli.threads = Some(value.parse().map_err(|e| anyhow::anyhow!("bad --threads: {e}"))?),
            "tol-override" | "tol_override" => cli.tol_override.push(value),
            _ => pairs.push((key, value)),
        }
    }
    Ok(pairs)
}

fn is_solver_abort(e: &GcfError) -> bool {
    matches!(
        e,
        GcfError::NonConvex { .. }
            | GcfError::CurvatureBlowup { .. }
            | GcfError::StiffnessFailure { .. }
            | GcfError::NoBlowupDetected { .. }
            | GcfError::ResampleGap { .. }
            | GcfError::HypothesisViolation(_)
            | GcfError::SingularChart { .. }
            | GcfError::OutOfDomain(_)
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<SolverAbort>()) {
        return EXIT_SOLVER;
    }
    match err.chain().find_map(|e| e.downcast_ref::<GcfError>()) {
        Some(e) if is_solver_abort(e) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn execute(mut cli: Cli) -> Result<Verdict> {
    let set = match &cli.command {
        Command::Run(o) | Command::Verify(o) | Command::Double(o) | Command::Barrier(o) | Command::Oracle(o) => o.set.clone(),
    };
    let pairs = split_overrides(&mut cli, &set)?;
    let mut tol = Tolerances::default();
    for spec in &cli.tol_override {
        tol.apply(spec)?;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = Config::load(cli.config.as_deref(), &pairs)?;
    let out = Output::new(cli.out.clone());
    match cli.command {
        Command::Run(_) => commands::cmd_run(&cfg, &out),
        Command::Verify(_) => commands::cmd_verify(&cfg, &out, &tol),
        Command::Double(_) => commands::cmd_double(&cfg, &out, &tol),
        Command::Barrier(_) => commands::cmd_barrier(&cfg, &out),
        Command::Oracle(_) => commands::cmd_oracle(&cfg, &out, &tol),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(v) if v.pass => {
            println!("{}", v.message);
            ExitCode::SUCCESS
        }
        Ok(v) => {
            eprintln!("{}", v.message);
            ExitCode::from(EXIT_VERIFY)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
