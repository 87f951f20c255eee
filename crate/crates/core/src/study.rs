//! Convergence sweeps and their CSV / plot-data output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{generate, HeModeKind};
use crate::problem::ProblemSpec;
use crate::solve::{run, Method, SolveOptions};

pub const CSV_HEADER: &str = "n,h,method,k,dofs,l2_error,h1_error,eoc_l2,eoc_h1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub method: Method,
    pub k: usize,
    pub dofs: usize,
    pub l2_error: f64,
    pub h1_error: f64,
    pub eoc_l2: Option<f64>,
    pub eoc_h1: Option<f64>,
}

/// `log(e_prev / e) / log(h_prev / h)`.
pub fn eoc(e_prev: f64, e: f64, h_prev: f64, h: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}

/// Solves on the generated mesh for every `n` in `n_list` (strictly
/// ascending) and records errors and observed orders.
pub fn run_convergence(
    problem: &ProblemSpec,
    method: Method,
    k: usize,
    n_list: &[usize],
    he_mode: HeModeKind,
    opts: &SolveOptions,
) -> Result<Vec<ConvergenceRow>> {
    if problem.exact.is_none() {
        return Err(Error::InvalidArgument(format!(
            "problem `{}` has no exact solution; a convergence study needs one",
            problem.name
        )));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n list must be strictly ascending".into()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mesh = generate(n, he_mode)?;
        let report = run(method, &mesh, k, problem, opts)?;
        let (l2, h1) = report.errors(problem, &mesh)?.expect("exact solution checked above");
        let h = 1.0 / n as f64;
        let (eoc_l2, eoc_h1) = match rows.last() {
            Some(prev) => (
                Some(eoc(prev.l2_error, l2, prev.h, h)),
                Some(eoc(prev.h1_error, h1, prev.h, h)),
            ),
            None => (None, None),
        };
        log::info!(
            "{method} k={k} n={n}: dofs={} l2={l2:.3e} h1={h1:.3e} ({:.2?})",
            report.unknowns,
            report.wall_time
        );
        rows.push(ConvergenceRow {
            n,
            h,
            method,
            k,
            dofs: report.unknowns,
            l2_error: l2,
            h1_error: h1,
            eoc_l2,
            eoc_h1,
        });
    }
    Ok(rows)
}

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn csv_string(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            num(r.h),
            r.method,
            r.k,
            r.dofs,
            num(r.l2_error),
            num(r.h1_error),
            opt_num(r.eoc_l2),
            opt_num(r.eoc_h1)
        );
    }
    out
}

pub fn emit_csv(rows: &[ConvergenceRow], path: &Path) -> Result<()> {
    fs::write(path, csv_string(rows))?;
    Ok(())
}

/// Parses text produced by [`csv_string`].
pub fn parse_csv(text: &str) -> Result<Vec<ConvergenceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "expected CSV header `{CSV_HEADER}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let bad = |line: usize, what: &str| Error::Config(format!("CSV line {}: invalid {what}", line + 2));
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(i, "field count"));
            }
            let float = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(i, what));
            let opt = |s: &str, what: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    float(s, what).map(Some)
                }
            };
            Ok(ConvergenceRow {
                n: f[0].parse().map_err(|_| bad(i, "n"))?,
                h: float(f[1], "h")?,
                method: f[2].parse().map_err(|_| bad(i, "method"))?,
                k: f[3].parse().map_err(|_| bad(i, "k"))?,
                dofs: f[4].parse().map_err(|_| bad(i, "dofs"))?,
                l2_error: float(f[5], "l2_error")?,
                h1_error: float(f[6], "h1_error")?,
                eoc_l2: opt(f[7], "eoc_l2")?,
                eoc_h1: opt(f[8], "eoc_h1")?,
            })
        })
        .collect()
}

/// Whitespace-separated `log10(h) log10(l2_error) log10(h1_error)` columns,
/// one block per (method, k) separated by blank lines.
pub fn plotdata_string(rows: &[ConvergenceRow]) -> String {
    let mut out = String::new();
    let mut current: Option<(Method, usize)> = None;
    for r in rows {
        if current != Some((r.method, r.k)) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# method={} k={}", r.method, r.k);
            out.push_str("# log10(h) log10(l2_error) log10(h1_error)\n");
            current = Some((r.method, r.k));
        }
        let _ = writeln!(
            out,
            "{} {} {}",
            num(r.h.log10()),
            num(r.l2_error.log10()),
            num(r.h1_error.log10())
        );
    }
    out
}

pub fn emit_plotdata(rows: &[ConvergenceRow], path: &Path) -> Result<()> {
    fs::write(path, plotdata_string(rows))?;
    Ok(())
}
