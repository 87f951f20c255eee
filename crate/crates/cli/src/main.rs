use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use polydg::mesh::{generate, quality_report, HeModeKind};
use polydg::problem::{builtin_case, ProblemConfig};
use polydg::solve::{run, with_threads, SolveOptions};
use polydg::study::{csv_string, emit_plotdata, run_convergence};
use polydg::{Method, ProblemSpec};
use serde_json::json;

mod check;

const EXIT_SOLVER: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "polydg", version, about = "SIP and statically condensed SIP on agglomerated polygonal meshes")]
struct Cli {
    /// Worker threads for assembly and condensation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a polygonal mesh, write it as JSON and print its quality report.
    Mesh(MeshArgs),
    /// Solve one problem and print a report.
    Solve(SolveArgs),
    /// Run a mesh-refinement sweep and emit CSV (and optionally plot data).
    Convergence(ConvergenceArgs),
    /// Run a quick invariant suite on small meshes.
    Check,
}

#[derive(Args, Debug)]
struct MeshArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value = "facet")]
    he_mode: HeModeKind,
    /// Mesh JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-cell quality values in the report.
    #[arg(long)]
    cells: bool,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Built-in problem.
    #[arg(long, conflicts_with = "config")]
    case: Option<String>,
    /// Problem description (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Penalty parameter (default 2k(k+1)).
    #[arg(long)]
    gamma: Option<f64>,
}

impl ProblemArgs {
    fn problem(&self) -> Result<ProblemSpec> {
        Ok(match (&self.case, &self.config) {
            (_, Some(path)) => ProblemConfig::from_file(path)
                .and_then(|c| c.build())
                .with_context(|| format!("reading problem from {}", path.display()))?,
            (Some(name), None) => builtin_case(name)?,
            (None, None) => builtin_case("poisson-sin")?,
        })
    }

    fn options(&self) -> SolveOptions {
        SolveOptions {
            gamma: self.gamma,
            ..SolveOptions::default()
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "scsip")]
    method: Method,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value = "facet")]
    he_mode: HeModeKind,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// One or more methods, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sip,scsip")]
    method: Vec<Method>,
    /// One or more degrees, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<usize>,
    /// Strictly ascending mesh parameters.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    n_list: Vec<usize>,
    #[arg(long, default_value = "uniform")]
    he_mode: HeModeKind,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Whitespace-separated log10 columns for plotting.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

fn cmd_mesh(args: &MeshArgs) -> Result<()> {
    let mesh = generate(args.n, args.he_mode)?;
    if let Some(path) = &args.out {
        mesh.write(path)
            .with_context(|| format!("writing mesh to {}", path.display()))?;
    }
    let mut report = serde_json::to_value(quality_report(&mesh)?)?;
    if !args.cells {
        report.as_object_mut().unwrap().remove("cells");
    }
    report["n"] = json!(args.n);
    report["triangles"] = json!(mesh.tri.triangles.len());
    report["facets"] = json!(mesh.facets.len());
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let problem = args.problem.problem()?;
    let mesh = generate(args.n, args.he_mode)?;
    let report = run(args.method, &mesh, args.k, &problem, &args.problem.options())?;
    let errors = report.errors(&problem, &mesh)?;
    let value = json!({
        "case": problem.name,
        "method": report.method,
        "k": report.k,
        "n": args.n,
        "gamma": report.gamma,
        "he_mode": args.he_mode,
        "cells": report.num_cells,
        "unknowns": report.unknowns,
        "relative_residual": report.relative_residual,
        "refinements": report.refinements,
        "ordering": report.ordering,
        "wall_time_s": report.wall_time.as_secs_f64(),
        "l2_error": errors.map(|e| e.0),
        "h1_error": errors.map(|e| e.1),
        "multiplier_norm": report.multiplier_norm,
    });
    let text = serde_json::to_string_pretty(&value)?;
    match &args.out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(polydg::Error::from)
            .with_context(|| format!("writing report to {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_convergence(args: &ConvergenceArgs) -> Result<()> {
    let problem = args.problem.problem()?;
    let opts = args.problem.options();
    let mut rows = Vec::new();
    for &k in &args.k {
        for &method in &args.method {
            rows.extend(run_convergence(&problem, method, k, &args.n_list, args.he_mode, &opts)?);
        }
    }
    let csv = csv_string(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(polydg::Error::from)
            .with_context(|| format!("writing CSV to {}", path.display()))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.plot_data {
        emit_plotdata(&rows, path).with_context(|| format!("writing plot data to {}", path.display()))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Mesh(a) => cmd_mesh(a).map(|_| true),
        Command::Solve(a) => cmd_solve(a).map(|_| true),
        Command::Convergence(a) => cmd_convergence(a).map(|_| true),
        Command::Check => Ok(check::run_all()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<polydg::Error>()) {
        Some(e) if e.is_configuration() => EXIT_CONFIG,
        Some(_) => EXIT_SOLVER,
        None => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match with_threads(cli.threads, || dispatch(&cli)) {
        Ok(Ok(true)) => ExitCode::SUCCESS,
        Ok(Ok(false)) => ExitCode::from(EXIT_SOLVER),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
