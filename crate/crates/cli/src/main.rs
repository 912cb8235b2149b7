mod commands;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::*;

/// Central configurations, Hessian spectra and integrability diagnostics for
/// the Newtonian n-body problem.
///
/// Every run writes summary.json, CSV tables and manifest.json to a fresh
/// directory under --out; the summary is also printed on stdout.
#[derive(Debug, Parser)]
#[command(name = "nbint", version)]
struct Cli {
    /// Parent directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Colinear (Moulton) central configuration and its Hessian spectrum.
    SolveCc(SolveCcArgs),
    /// Masses on the exceptional curve with eigenvalue k, exact when rho is rational.
    Ek(EkArgs),
    /// Grid sweep of the maximal Hessian trace for colinear 4-body configurations.
    Sweep(SweepArgs),
    /// The 26 candidate 4-body eigenvalue pairs and their exclusion status.
    Pairs(PairsArgs),
    /// Spectrum of a colinear configuration seen as a planar one.
    Planar(PlanarArgs),
    /// Integrate an integrable restriction and report first-integral drift.
    Simulate(SimulateArgs),
    /// Sample the acceleration field on a linear subspace and report leakage.
    CheckSubspace(CheckSubspaceArgs),
    /// Re-run the command recorded in a manifest.json.
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    /// Path to a manifest.json from a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

enum Failure {
    Usage(String),
    Module(nbint::Error),
    Io(String),
}

impl From<nbint::Error> for Failure {
    fn from(e: nbint::Error) -> Self {
        Failure::Module(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

fn dispatch(command: &Command) -> Result<(&'static str, Value, output::Outcome), Failure> {
    let params = |a: &dyn erased::ToValue| a.to_value();
    Ok(match command {
        Command::SolveCc(a) => ("solve-cc", params(a), cmd_solve_cc(a)?),
        Command::Ek(a) => ("ek", params(a), cmd_ek(a)?),
        Command::Sweep(a) => ("sweep", params(a), cmd_sweep(a)?),
        Command::Pairs(a) => ("pairs", params(a), cmd_pairs(a)?),
        Command::Planar(a) => ("planar", params(a), cmd_planar(a)?),
        Command::Simulate(a) => ("simulate", params(a), cmd_simulate(a)?),
        Command::CheckSubspace(a) => ("check-subspace", params(a), cmd_check_subspace(a)?),
        Command::Replay(_) => unreachable!("replay is resolved before dispatch"),
    })
}

mod erased {
    use serde::Serialize;
    use serde_json::Value;

    pub trait ToValue {
        fn to_value(&self) -> Value;
    }

    impl<T: Serialize> ToValue for T {
        fn to_value(&self) -> Value {
            serde_json::to_value(self).expect("arguments serialize")
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), Failure> {
    let started = Instant::now();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    let (cli, argv) = match &cli.command {
        Command::Replay(r) => {
            let text = std::fs::read_to_string(&r.manifest)?;
            let manifest: Value = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", r.manifest.display())))?;
            let stored: Vec<String> = manifest["argv"]
                .as_array()
                .ok_or_else(|| Failure::Usage("manifest has no argv".into()))?
                .iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect();
            let mut replayed = Cli::try_parse_from(std::iter::once("nbint".to_string()).chain(stored.clone()))
                .map_err(|e| Failure::Usage(e.to_string()))?;
            replayed.out = cli.out.clone();
            (replayed, stored)
        }
        _ => (cli, argv),
    };
    let (name, params, outcome) = dispatch(&cli.command)?;
    let dir = output::write_run(&cli.out, name, &params, &argv, started, &outcome)?;
    let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    // A closed pipe on stdout is not a failure of the run.
    let _ = writeln!(std::io::stdout(), "{text}");
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Module(e)) => {
            let report = json!({ "error": e, "message": e.to_string() });
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("error serializes"));
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            let report = json!({ "error": { "kind": "io", "details": msg }, "message": msg });
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("error serializes"));
            ExitCode::from(2)
        }
    }
}
