//! Quick invariant suite for `polydg check`.

use polydg::assembly::{assemble_constraints, assemble_sip};
use polydg::basis::{dim, dim_minus_two};
use polydg::condensation::condense;
use polydg::linalg::rank_svd;
use polydg::mesh::{generate, HeModeKind};
use polydg::problem::{builtin_case, polynomial_patch_case, BUILTIN_CASES};
use polydg::quadrature::{segment_rule, triangle_rule, MAX_SEGMENT_DEGREE, MAX_TRIANGLE_DEGREE};
use polydg::solve::{default_gamma, run, run_saddle_oracle, run_scsip, SolveOptions};
use polydg::Method;

type Check = fn() -> Result<String, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn symmetry() -> Result<String, String> {
    let mesh = generate(4, HeModeKind::Facet).map_err(err)?;
    let mut worst: f64 = 0.0;
    for case in BUILTIN_CASES {
        let p = builtin_case(case).map_err(err)?;
        for k in 2..=4 {
            let sys = assemble_sip(&mesh, k, default_gamma(k), &p).map_err(err)?;
            worst = worst.max(sys.symmetry_defect());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max relative asymmetry {worst:.1e}"))
    } else {
        Err(format!("relative asymmetry {worst:.1e}"))
    }
}

fn patch() -> Result<String, String> {
    let mesh = generate(4, HeModeKind::Facet).map_err(err)?;
    let mut worst: f64 = 0.0;
    for k in 2..=4 {
        let p = polynomial_patch_case(k).map_err(err)?;
        for method in Method::ALL {
            let r = run(method, &mesh, k, &p, &SolveOptions::default()).map_err(err)?;
            let (l2, _) = r.errors(&p, &mesh).map_err(err)?.unwrap();
            worst = worst.max(l2);
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max L2 error {worst:.1e}"))
    } else {
        Err(format!("L2 error {worst:.1e}"))
    }
}

fn oracle() -> Result<String, String> {
    let mesh = generate(4, HeModeKind::Uniform).map_err(err)?;
    let mut worst: f64 = 0.0;
    for case in BUILTIN_CASES {
        let p = builtin_case(case).map_err(err)?;
        let a = run_scsip(&mesh, 2, &p, &SolveOptions::default()).map_err(err)?;
        let b = run_saddle_oracle(&mesh, 2, &p, &SolveOptions::default()).map_err(err)?;
        let d = a.solution.l2_distance(&b.solution, &mesh).map_err(err)? / b.solution.l2_norm(&mesh).map_err(err)?;
        worst = worst.max(d);
    }
    if worst <= 1e-8 {
        Ok(format!("max relative L2 difference {worst:.1e}"))
    } else {
        Err(format!("relative L2 difference {worst:.1e}"))
    }
}

fn rank() -> Result<String, String> {
    let mesh = generate(4, HeModeKind::Facet).map_err(err)?;
    for case in BUILTIN_CASES {
        let p = builtin_case(case).map_err(err)?;
        for k in 2..=4 {
            let cons = assemble_constraints(&mesh, k, &p).map_err(err)?;
            if let Some(l) = cons.b.iter().position(|b| rank_svd(b, 1e-10) != dim_minus_two(k)) {
                return Err(format!("{case} k={k}: cell {l} rank deficient"));
            }
            let cond = condense(&cons, false).map_err(err)?;
            if cond.reduced_dim() != 2 * k + 1 {
                return Err(format!("{case} k={k}: kernel dimension {}", cond.reduced_dim()));
            }
        }
    }
    Ok("full row rank, kernel dimension 2k+1".into())
}

fn counts() -> Result<String, String> {
    let mesh = generate(4, HeModeKind::Uniform).map_err(err)?;
    let p = builtin_case("poisson-sin").map_err(err)?;
    for k in 2..=4 {
        let sip = run(Method::Sip, &mesh, k, &p, &SolveOptions::default()).map_err(err)?;
        let sc = run(Method::Scsip, &mesh, k, &p, &SolveOptions::default()).map_err(err)?;
        if sip.unknowns != 16 * dim(k) || sc.unknowns != 16 * (2 * k + 1) {
            return Err(format!("k={k}: {} and {} unknowns", sip.unknowns, sc.unknowns));
        }
    }
    Ok("N_e·N_k for sip, N_e(2k+1) for scsip".into())
}

fn quadrature() -> Result<String, String> {
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    for d in 0..=MAX_TRIANGLE_DEGREE {
        let r = triangle_rule(d).map_err(err)?;
        for a in 0..=d {
            for b in 0..=d - a {
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                let q: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(p, w)| w * p.x.powi(a as i32) * p.y.powi(b as i32))
                    .sum();
                if (q - exact).abs() > 1e-13 * exact {
                    return Err(format!("triangle degree {d}: x^{a} y^{b}"));
                }
            }
        }
    }
    for d in 0..=MAX_SEGMENT_DEGREE {
        let r = segment_rule(d).map_err(err)?;
        for a in 0..=d {
            let exact = if a % 2 == 0 { 2.0 / (a + 1) as f64 } else { 0.0 };
            let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p.x.powi(a as i32)).sum();
            if (q - exact).abs() > 1e-13 * 2.0 / (a + 1) as f64 {
                return Err(format!("segment degree {d}: x^{a}"));
            }
        }
    }
    Ok("all shipped rules exact to their degree".into())
}

/// Prints one line per check; returns whether all passed.
pub fn run_all() -> bool {
    let checks: [(&str, Check); 6] = [
        ("symmetry", symmetry),
        ("patch test", patch),
        ("oracle equivalence", oracle),
        ("constraint rank", rank),
        ("unknown counts", counts),
        ("quadrature", quadrature),
    ];
    let mut ok = true;
    for (name, f) in checks {
        match f() {
            Ok(msg) => println!("[PASS] {name}: {msg}"),
            Err(msg) => {
                ok = false;
                println!("[FAIL] {name}: {msg}");
            }
        }
    }
    ok
}
