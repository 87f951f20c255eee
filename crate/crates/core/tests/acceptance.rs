//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use polydg::assembly::{assemble_constraints, assemble_sip};
use polydg::basis::{dim, dim_minus_two};
use polydg::condensation::condense;
use polydg::linalg::rank_svd;
use polydg::mesh::{generate, HeModeKind};
use polydg::problem::{builtin_case, polynomial_patch_case, ProblemConfig};
use polydg::quadrature::{segment_rule, triangle_rule, MAX_SEGMENT_DEGREE, MAX_TRIANGLE_DEGREE};
use polydg::solve::{default_gamma, run_saddle_oracle, run_scsip, run_sip, SkylineCholesky, SolveOptions};
use polydg::study::{run_convergence, ConvergenceRow};
use polydg::{Error, Method};

const CASES: [&str; 2] = ["poisson-sin", "variable-a"];
const DEGREES: [usize; 3] = [2, 3, 4];
const SWEEP: [usize; 4] = [4, 8, 16, 32];

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
type Sweeps = BTreeMap<(&'static str, Method, usize), Vec<ConvergenceRow>>;

fn run_sweeps() -> Result<Sweeps, String> {
    let mut out = BTreeMap::new();
    for case in CASES {
        let p = builtin_case(case).map_err(|e| e.to_string())?;
        for k in DEGREES {
            for method in [Method::Sip, Method::Scsip] {
                let rows = run_convergence(&p, method, k, &SWEEP, HeModeKind::Uniform, &SolveOptions::default())
                    .map_err(|e| format!("{case} {method} k={k}: {e}"))?;
                out.insert((case, method, k), rows);
            }
        }
    }
    Ok(out)
}

fn convergence(sweeps: &Sweeps, case: &str) -> Outcome {
    let mut detail = Vec::new();
    let mut failures = Vec::new();
    for (&(c, method, k), rows) in sweeps {
        if c != case {
            continue;
        }
        let last = rows.last().unwrap();
        let (l2, h1) = (last.eoc_l2.unwrap(), last.eoc_h1.unwrap());
        detail.push(format!("{method} k={k}: L2 {l2:.2} H1 {h1:.2}"));
        let kf = k as f64;
        if !(h1 >= kf - 0.2 && l2 >= kf + 1.0 - 0.2) {
            failures.push(format!("{method} k={k} (L2 {l2:.3}, H1 {h1:.3})"));
        }
    }
    if failures.is_empty() {
        Ok(detail.join("; "))
    } else {
        Err(format!("orders below band: {}", failures.join(", ")))
    }
}

fn proximity(sweeps: &Sweeps) -> Outcome {
    let mut lo: f64 = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut failures = Vec::new();
    for case in CASES {
        for k in DEGREES {
            let sip = &sweeps[&(case, Method::Sip, k)];
            let sc = &sweeps[&(case, Method::Scsip, k)];
            for (a, b) in sip.iter().zip(sc) {
                for r in [b.l2_error / a.l2_error, b.h1_error / a.h1_error] {
                    lo = lo.min(r);
                    hi = hi.max(r);
                    if !(0.5..=2.0).contains(&r) {
                        failures.push(format!("{case} k={k} n={}: ratio {r:.3}", a.n));
                    }
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("scsip/sip error ratios in [{lo:.3}, {hi:.3}]"))
    } else {
        Err(failures.join(", "))
    }
}

fn unknown_counts(sweeps: &Sweeps) -> Outcome {
    let mut checked = 0;
    for (&(_, method, k), rows) in sweeps {
        for r in rows {
            let ne = r.n * r.n;
            let want = match method {
                Method::Sip => ne * (k + 1) * (k + 2) / 2,
                _ => ne * (2 * k + 1),
            };
            if r.dofs != want {
                return Err(format!("{method} k={k} n={}: {} unknowns, expected {want}", r.n, r.dofs));
            }
            checked += 1;
        }
    }
    let mesh = generate(4, HeModeKind::Uniform).map_err(|e| e.to_string())?;
    let p = builtin_case("poisson-sin").unwrap();
    let r = run_saddle_oracle(&mesh, 4, &p, &SolveOptions::default()).map_err(|e| e.to_string())?;
    if r.unknowns != 16 * (dim(4) + dim_minus_two(4)) {
        return Err(format!("oracle has {} unknowns", r.unknowns));
    }
    Ok(format!("{checked} runs match N_e(k+1)(k+2)/2 and N_e(2k+1)"))
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in CASES {
        let p = builtin_case(case).unwrap();
        for k in DEGREES {
            for n in [4, 8] {
                let mesh = generate(n, HeModeKind::Uniform).map_err(|e| e.to_string())?;
                let opts = SolveOptions::default();
                let a = run_scsip(&mesh, k, &p, &opts).map_err(|e| e.to_string())?;
                let b = run_saddle_oracle(&mesh, k, &p, &opts).map_err(|e| e.to_string())?;
                let d = a.solution.l2_distance(&b.solution, &mesh).map_err(|e| e.to_string())?
                    / b.solution.l2_norm(&mesh).map_err(|e| e.to_string())?;
                worst = worst.max(d);
                if !(d <= 1e-8) {
                    return Err(format!("{case} k={k} n={n}: relative L2 difference {d:.3e}"));
                }
            }
        }
    }
    Ok(format!("max relative L2 difference {worst:.2e}"))
}

fn patch_test() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut problems = Vec::new();
    for k in DEGREES {
        problems.push((k, polynomial_patch_case(k).map_err(|e| e.to_string())?));
    }
    let harmonic = ProblemConfig {
        a11: Some("1".into()),
        a12: Some("0".into()),
        a22: Some("1".into()),
        f: Some("0".into()),
        u: Some("x^3 - 3*x*y^2".into()),
        ux: Some("3*x^2 - 3*y^2".into()),
        uy: Some("-6*x*y".into()),
        ..Default::default()
    }
    .build()
    .map_err(|e| e.to_string())?;
    problems.push((3, harmonic.clone()));
    problems.push((4, harmonic));
    for n in [4, 8] {
        for mode in [HeModeKind::Uniform, HeModeKind::Facet] {
            let mesh = generate(n, mode).map_err(|e| e.to_string())?;
            for (k, p) in &problems {
                for method in [Method::Sip, Method::Scsip] {
                    let r = polydg::solve::run(method, &mesh, *k, p, &SolveOptions::default())
                        .map_err(|e| e.to_string())?;
                    let (l2, _) = r.errors(p, &mesh).map_err(|e| e.to_string())?.unwrap();
                    worst = worst.max(l2);
                    if !(l2 <= 1e-9) {
                        return Err(format!("{method} k={k} n={n} {mode}: L2 error {l2:.3e}"));
                    }
                }
            }
        }
    }
    Ok(format!("max L2 error {worst:.2e}"))
}

fn rank_property() -> Outcome {
    let mut cells = 0;
    for case in CASES {
        let p = builtin_case(case).unwrap();
        for n in SWEEP {
            let mesh = generate(n, HeModeKind::Uniform).map_err(|e| e.to_string())?;
            for k in DEGREES {
                let cons = assemble_constraints(&mesh, k, &p).map_err(|e| e.to_string())?;
                for (l, b) in cons.b.iter().enumerate() {
                    let r = rank_svd(b, 1e-10);
                    if r != dim_minus_two(k) {
                        return Err(format!("{case} n={n} k={k} cell {l}: rank {r}"));
                    }
                }
                let cond = condense(&cons, false).map_err(|e| e.to_string())?;
                if cond.kernels.iter().any(|m| m.cols() != 2 * k + 1) {
                    return Err(format!("{case} n={n} k={k}: kernel dimension differs from {}", 2 * k + 1));
                }
                cells += mesh.num_cells();
            }
        }
    }
    Ok(format!("{cells} cell constraint matrices with full row rank and kernel dimension 2k+1"))
}

fn coercivity() -> Outcome {
    let mut min_pivot = f64::INFINITY;
    for case in CASES {
        let p = builtin_case(case).unwrap();
        for n in SWEEP {
            let mesh = generate(n, HeModeKind::Uniform).map_err(|e| e.to_string())?;
            for k in DEGREES {
                let sys = assemble_sip(&mesh, k, default_gamma(k), &p).map_err(|e| e.to_string())?;
                let f = SkylineCholesky::factor(&sys).map_err(|e| format!("{case} n={n} k={k}: {e}"))?;
                min_pivot = min_pivot.min(f.min_pivot());
            }
        }
    }
    let mesh = generate(4, HeModeKind::Uniform).unwrap();
    let p = builtin_case("poisson-sin").unwrap();
    match run_sip(&mesh, 2, &p, &SolveOptions::with_gamma(0.01)) {
        Err(Error::NotPositiveDefinite { index, pivot }) => Ok(format!(
            "all pivots positive at 2k(k+1) (min scaled pivot {min_pivot:.2e}); gamma=0.01 rejected at unknown {index} (pivot {pivot:.2e})"
        )),
        other => Err(format!("gamma=0.01 was not rejected: {:?}", other.map(|r| r.unknowns))),
    }
}

fn quadrature_exactness() -> Outcome {
    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }
    let mut worst: f64 = 0.0;
    for d in 0..=MAX_TRIANGLE_DEGREE {
        let rule = triangle_rule(d).map_err(|e| e.to_string())?;
        for a in 0..=rule.exact_degree {
            for b in 0..=rule.exact_degree - a {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p.x.powi(a as i32) * p.y.powi(b as i32))
                    .sum();
                let err = (q - exact).abs() / exact;
                worst = worst.max(err);
                if !(err <= 1e-13) {
                    return Err(format!("triangle rule {d}: x^{a} y^{b} relative error {err:.2e}"));
                }
            }
        }
    }
    for d in 0..=MAX_SEGMENT_DEGREE {
        let rule = segment_rule(d).map_err(|e| e.to_string())?;
        for a in 0..=rule.exact_degree {
            let exact = if a % 2 == 0 { 2.0 / (a + 1) as f64 } else { 0.0 };
            let scale = 2.0 / (a + 1) as f64;
            let q: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p.x.powi(a as i32)).sum();
            let err = (q - exact).abs() / scale;
            worst = worst.max(err);
            if !(err <= 1e-13) {
                return Err(format!("segment rule {d}: x^{a} relative error {err:.2e}"));
            }
        }
    }
    Ok(format!(
        "triangle degrees 0..={MAX_TRIANGLE_DEGREE}, segment degrees 0..={MAX_SEGMENT_DEGREE}; max relative error {worst:.2e}"
    ))
}

fn kernel_reuse() -> Outcome {
    let p = builtin_case("poisson-sin").unwrap();
    let mesh = generate(8, HeModeKind::Uniform).map_err(|e| e.to_string())?;
    let run = |share| {
        let opts = SolveOptions {
            share_kernel: Some(share),
            ..SolveOptions::default()
        };
        run_scsip(&mesh, 3, &p, &opts).map_err(|e| e.to_string())
    };
    let (a, b) = (run(true)?, run(false)?);
    let d = a.solution.l2_distance(&b.solution, &mesh).map_err(|e| e.to_string())?;
    if d <= 1e-10 {
        Ok(format!("L2 difference {d:.2e}"))
    } else {
        Err(format!("L2 difference {d:.3e}"))
    }
}

fn multiplier_decay() -> Outcome {
    let p = builtin_case("poisson-sin").unwrap();
    let mut norms = Vec::new();
    for n in [4, 8, 16] {
        let mesh = generate(n, HeModeKind::Uniform).map_err(|e| e.to_string())?;
        let r = run_saddle_oracle(&mesh, 2, &p, &SolveOptions::default()).map_err(|e| e.to_string())?;
        norms.push(r.multiplier_norm.unwrap());
    }
    let text = norms.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" > ");
    if norms.windows(2).all(|w| w[1] < w[0]) {
        Ok(format!("||p_h||_h: {text}"))
    } else {
        Err(format!("not monotone: {text}"))
    }
}

fn main() {
    let started = Instant::now();
    let sweeps = run_sweeps();
    let from_sweeps = |f: &dyn Fn(&Sweeps) -> Outcome| -> Outcome {
        match &sweeps {
            Ok(s) => f(s),
            Err(e) => Err(format!("sweep failed: {e}")),
        }
    };

    let criteria: Vec<Criterion<'_>> = vec![
        ("1 convergence poisson-sin", Box::new(|| from_sweeps(&|s| convergence(s, "poisson-sin")))),
        ("2 convergence variable-a", Box::new(|| from_sweeps(&|s| convergence(s, "variable-a")))),
        ("3 sip/scsip proximity", Box::new(|| from_sweeps(&proximity))),
        ("4 oracle equivalence", Box::new(oracle_equivalence)),
        ("5 patch test", Box::new(patch_test)),
        ("6 constraint rank", Box::new(rank_property)),
        ("7 positive pivots", Box::new(coercivity)),
        ("8 unknown counts", Box::new(|| from_sweeps(&unknown_counts))),
        ("9 quadrature exactness", Box::new(quadrature_exactness)),
        ("10 shared kernel basis", Box::new(kernel_reuse)),
        ("11 multiplier decay", Box::new(multiplier_decay)),
    ];

    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    if let Ok(s) = &sweeps {
        println!("\nobserved orders between the two finest meshes (uniform h_E, gamma = 2k(k+1)):");
        for (&(case, method, k), rows) in s {
            let r = rows.last().unwrap();
            println!(
                "  {case:<12} {method:<6} k={k}  L2 {:>6.3}  H1 {:>6.3}  (L2 error {:.3e} at n={})",
                r.eoc_l2.unwrap(),
                r.eoc_h1.unwrap(),
                r.l2_error,
                r.n
            );
        }
    }
    println!(
        "\nacceptance: {} passed, {failed} failed ({:.1?})",
        criteria.len() - failed,
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
