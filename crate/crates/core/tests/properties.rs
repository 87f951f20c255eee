#![allow(clippy::needless_range_loop)]

use polydg::basis::{BasisSpec, Derivatives};
use polydg::linalg::{mgs_orthonormalize, solve_saddle_dense, DenseMatrix};
use polydg::problem::parse_expr;
use polydg::Point;
use proptest::prelude::*;

/// Dense Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let l = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= l * a[c][k];
            }
            b[r] -= l * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn saddle_case() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=15)
        .prop_flat_map(|n| (Just(n), 1usize..n))
        .prop_flat_map(|(n, m)| {
            (
                Just(n),
                Just(m),
                prop::collection::vec(-1.0f64..1.0, m * n),
                prop::collection::vec(-1.0f64..1.0, n),
                prop::collection::vec(-1.0f64..1.0, m),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_gradients_match_finite_differences(
        k in 0usize..7,
        sx in -1.0f64..1.0, sy in -1.0f64..1.0,
        px in -1.0f64..1.0, py in -1.0f64..1.0,
    ) {
        let b = BasisSpec::new(k, Point::new(sx, sy));
        let x = Point::new(px, py);
        let v = b.eval(x, Derivatives::Hessian);
        let h = 1e-5;
        let at = |dx: f64, dy: f64| b.eval(Point::new(px + dx, py + dy), Derivatives::Gradient);
        let (xp, xm, yp, ym) = (at(h, 0.0), at(-h, 0.0), at(0.0, h), at(0.0, -h));
        for i in 0..b.len() {
            let gx = (xp.values[i] - xm.values[i]) / (2.0 * h);
            let gy = (yp.values[i] - ym.values[i]) / (2.0 * h);
            prop_assert!((gx - v.gradients[i][0]).abs() < 1e-6 * (1.0 + gx.abs()));
            prop_assert!((gy - v.gradients[i][1]).abs() < 1e-6 * (1.0 + gy.abs()));
            let hxx = (xp.gradients[i][0] - xm.gradients[i][0]) / (2.0 * h);
            let hxy = (yp.gradients[i][0] - ym.gradients[i][0]) / (2.0 * h);
            prop_assert!((hxx - v.hessians[i][0][0]).abs() < 1e-5 * (1.0 + hxx.abs()));
            prop_assert!((hxy - v.hessians[i][0][1]).abs() < 1e-5 * (1.0 + hxy.abs()));
        }
    }

    #[test]
    fn saddle_solve_matches_generic_solver((n, m, bv, ru, rc) in saddle_case()) {
        let b = DenseMatrix::from_rows(&bv.chunks(n).collect::<Vec<_>>());
        // Random matrices of this size are full rank with probability one;
        // skip the rare near-singular draws.
        prop_assume!(polydg::linalg::singular_values(&b).last().copied().unwrap_or(0.0) > 1e-3);
        let (u, p) = solve_saddle_dense(&b, &ru, &rc).unwrap();

        let dimk = n + m;
        let mut kkt = vec![vec![0.0; dimk]; dimk];
        for i in 0..n {
            kkt[i][i] = 1.0;
        }
        for r in 0..m {
            for c in 0..n {
                kkt[n + r][c] = b[(r, c)];
                kkt[c][n + r] = b[(r, c)];
            }
        }
        let rhs: Vec<f64> = ru.iter().chain(&rc).copied().collect();
        let x = gauss_solve(kkt, rhs);
        let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (a, e) in u.iter().chain(&p).zip(&x) {
            prop_assert!((a - e).abs() <= 1e-10 * scale, "{a} vs {e}");
        }
        // Both block equations.
        let btp = b.tr_matvec(&p);
        for i in 0..n {
            prop_assert!((u[i] + btp[i] - ru[i]).abs() <= 1e-12 * scale * n as f64);
        }
        let bu = b.matvec(&u);
        for r in 0..m {
            prop_assert!((bu[r] - rc[r]).abs() <= 1e-12 * scale * n as f64);
        }
    }

    #[test]
    fn gram_schmidt_output_is_orthonormal(
        n in 1usize..10,
        vals in prop::collection::vec(-1.0f64..1.0, 100),
        count in 1usize..10,
    ) {
        let vecs: Vec<Vec<f64>> = vals.chunks(n).take(count).map(<[f64]>::to_vec).collect();
        let q = mgs_orthonormalize(&vecs, 1e-10, None);
        prop_assert!(q.len() <= n.min(vecs.len()));
        for (i, a) in q.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn printed_expressions_reparse_identically(
        a in -5.0f64..5.0, b in 1u32..4, c in -3.0f64..3.0,
        x in -1.0f64..1.0, y in -1.0f64..1.0,
    ) {
        let text = format!("{a} * x^{b} - sin({c} * y) / (1 + exp(x*y)) + -2^2");
        let e = parse_expr(&text).unwrap();
        let again = parse_expr(&e.to_string()).unwrap();
        prop_assert_eq!(e.to_string(), again.to_string());
        let p = Point::new(x, y);
        let direct = a * x.powi(b as i32) - (c * y).sin() / (1.0 + (x * y).exp()) - 4.0;
        prop_assert!((e.eval(p) - direct).abs() < 1e-12 * (1.0 + direct.abs()));
        prop_assert_eq!(e.eval(p), again.eval(p));
    }
}
