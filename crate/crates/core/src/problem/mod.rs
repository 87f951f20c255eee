//! PDE data for `−∇·(A∇u) = f` in Ω, `u = g` on ∂Ω.

pub mod expr;

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

pub use self::expr::{parse_expr, Expr};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// A scalar function of position.
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(Point) -> f64 + Send + Sync>);

impl ScalarField {
    pub fn new<F: Fn(Point) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(v: f64) -> Self {
        Self::new(move |_| v)
    }

    pub fn from_expr(e: Expr) -> Self {
        Self::new(move |p| e.eval(p))
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        (self.0)(p)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

/// Gradients of `(A11, A12, A22)` at a point.
pub type CoefficientGradient = Arc<dyn Fn(Point) -> [[f64; 2]; 3] + Send + Sync>;

/// Symmetric coefficient matrix `A(x)`; `A21` is `A12` by construction.
#[derive(Clone)]
pub struct CoefficientField {
    pub a11: ScalarField,
    pub a12: ScalarField,
    pub a22: ScalarField,
    /// Closed-form gradients of the entries, when known.
    pub gradient: Option<CoefficientGradient>,
    /// Declared constant over Ω; enables kernel-basis reuse in condensation.
    pub constant: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("has_gradient", &self.gradient.is_some())
            .field("constant", &self.constant)
            .finish()
    }
}

impl CoefficientField {
    pub fn identity() -> Self {
        Self {
            a11: ScalarField::constant(1.0),
            a12: ScalarField::constant(0.0),
            a22: ScalarField::constant(1.0),
            gradient: Some(Arc::new(|_| [[0.0; 2]; 3])),
            constant: true,
        }
    }

    #[inline]
    pub fn matrix(&self, p: Point) -> [[f64; 2]; 2] {
        let a12 = self.a12.eval(p);
        [[self.a11.eval(p), a12], [a12, self.a22.eval(p)]]
    }

    /// Eigenvalues `(λ_min, λ_max)` of `A(p)`.
    pub fn eigenvalues(&self, p: Point) -> (f64, f64) {
        let [[a, b], [_, d]] = self.matrix(p);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    /// Sampled ellipticity bounds `(α, β)` on a uniform `samples × samples`
    /// grid of interior points of the unit square.
    pub fn sampled_bounds(&self, samples: usize) -> (f64, f64) {
        let mut alpha = f64::INFINITY;
        let mut beta = f64::NEG_INFINITY;
        let s = samples.max(1);
        for i in 0..s {
            for j in 0..s {
                let p = Point::new((i as f64 + 0.5) / s as f64, (j as f64 + 0.5) / s as f64);
                let (lo, hi) = self.eigenvalues(p);
                alpha = alpha.min(lo);
                beta = beta.max(hi);
            }
        }
        (alpha, beta)
    }

    /// Sampled bound on `|∇A_ij|`, if gradients are available.
    pub fn sampled_gradient_bound(&self, samples: usize) -> Option<f64> {
        let grad = self.gradient.as_ref()?;
        let s = samples.max(1);
        let mut m = 0.0_f64;
        for i in 0..s {
            for j in 0..s {
                let p = Point::new((i as f64 + 0.5) / s as f64, (j as f64 + 0.5) / s as f64);
                for g in grad(p) {
                    m = m.max(g[0].hypot(g[1]));
                }
            }
        }
        Some(m)
    }
}

/// Exact solution and its gradient.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
}

impl ExactSolution {
    /// `u ≡ 0`; error norms against it are the norms of the discrete function.
    pub fn zero() -> Self {
        Self {
            u: ScalarField::constant(0.0),
            grad: Arc::new(|_| [0.0, 0.0]),
        }
    }
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution(..)")
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub coefficients: CoefficientField,
    pub source: ScalarField,
    pub dirichlet: ScalarField,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    /// Largest `|−∇·(A∇u) − f|` over a sample grid, with the divergence taken
    /// by central differences of the exact flux. `None` without an exact solution.
    pub fn consistency_defect(&self, samples: usize, step: f64) -> Option<f64> {
        let exact = self.exact.as_ref()?;
        let flux = |p: Point| {
            let a = self.coefficients.matrix(p);
            let g = (exact.grad)(p);
            [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
        };
        let s = samples.max(1);
        let mut worst = 0.0_f64;
        for i in 0..s {
            for j in 0..s {
                let p = Point::new((i as f64 + 0.5) / s as f64, (j as f64 + 0.5) / s as f64);
                let dx = (flux(Point::new(p.x + step, p.y))[0] - flux(Point::new(p.x - step, p.y))[0])
                    / (2.0 * step);
                let dy = (flux(Point::new(p.x, p.y + step))[1] - flux(Point::new(p.x, p.y - step))[1])
                    / (2.0 * step);
                worst = worst.max((-(dx + dy) - self.source.eval(p)).abs());
            }
        }
        Some(worst)
    }
}

pub const BUILTIN_CASES: [&str; 2] = ["poisson-sin", "variable-a"];

pub fn builtin_case(name: &str) -> Result<ProblemSpec> {
    match name {
        "poisson-sin" => Ok(poisson_sin()),
        "variable-a" => Ok(variable_a()),
        other => Err(Error::UnknownCase(other.to_string())),
    }
}

/// `A = I`, `u = sin(πx) sin(πy)`, `g = 0`.
fn poisson_sin() -> ProblemSpec {
    ProblemSpec {
        name: "poisson-sin".into(),
        coefficients: CoefficientField::identity(),
        source: ScalarField::new(|p| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin()),
        dirichlet: ScalarField::constant(0.0),
        exact: Some(ExactSolution {
            u: ScalarField::new(|p| (PI * p.x).sin() * (PI * p.y).sin()),
            grad: Arc::new(|p| {
                [
                    PI * (PI * p.x).cos() * (PI * p.y).sin(),
                    PI * (PI * p.x).sin() * (PI * p.y).cos(),
                ]
            }),
        }),
    }
}

/// `A = [[1+x, xy], [xy, 1+y]]`, `u = e^{xy}`.
fn variable_a() -> ProblemSpec {
    let u = |p: Point| (p.x * p.y).exp();
    ProblemSpec {
        name: "variable-a".into(),
        coefficients: CoefficientField {
            a11: ScalarField::new(|p| 1.0 + p.x),
            a12: ScalarField::new(|p| p.x * p.y),
            a22: ScalarField::new(|p| 1.0 + p.y),
            gradient: Some(Arc::new(|p| [[1.0, 0.0], [p.y, p.x], [0.0, 1.0]])),
            constant: false,
        },
        // −∂_i(A_ij ∂_j e^{xy}) expanded by the product rule.
        source: ScalarField::new(move |p| {
            let (x, y) = (p.x, p.y);
            -u(p) * (x + y + x * x + y * y + 4.0 * x * y + x * x * y + x * y * y + 2.0 * x * x * y * y)
        }),
        dirichlet: ScalarField::new(u),
        exact: Some(ExactSolution {
            u: ScalarField::new(u),
            grad: Arc::new(move |p| [p.y * u(p), p.x * u(p)]),
        }),
    }
}

/// Laplace problem whose exact solution is a polynomial of degree `k`, so
/// that both discretizations must reproduce it up to rounding.
pub fn polynomial_patch_case(k: usize) -> Result<ProblemSpec> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("patch case needs k >= 2, got {k}")));
    }
    let kf = k as f64;
    // u = 1 + x − 2y + xy + x^k + 2y^k − x^(k−1) y
    let u = format!("1 + x - 2*y + x*y + x^{k} + 2*y^{k} - x^{}*y", k - 1);
    let ux = format!("1 + y + {kf}*x^{} - {}*x^{}*y", k - 1, kf - 1.0, k as i64 - 2);
    let uy = format!("-2 + x + {}*y^{} - x^{}", 2.0 * kf, k - 1, k - 1);
    let lap = if k == 2 {
        // u_xx = 2, u_yy = 4
        "6".to_string()
    } else {
        format!(
            "{}*x^{} + {}*y^{} - {}*x^{}*y",
            kf * (kf - 1.0),
            k - 2,
            2.0 * kf * (kf - 1.0),
            k - 2,
            (kf - 1.0) * (kf - 2.0),
            k - 3
        )
    };
    let cfg = ProblemConfig {
        a11: Some("1".into()),
        a12: Some("0".into()),
        a22: Some("1".into()),
        f: Some(format!("-({lap})")),
        u: Some(u),
        ux: Some(ux),
        uy: Some(uy),
        constant_a: Some(true),
        ..Default::default()
    };
    let mut spec = cfg.build()?;
    spec.name = format!("patch-k{k}");
    Ok(spec)
}

/// Problem description as read from a JSON or TOML configuration file:
/// either `case = "<builtin>"` or explicit expression strings.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub case: Option<String>,
    #[serde(rename = "A11")]
    pub a11: Option<String>,
    #[serde(rename = "A12")]
    pub a12: Option<String>,
    #[serde(rename = "A22")]
    pub a22: Option<String>,
    pub f: Option<String>,
    pub g: Option<String>,
    pub u: Option<String>,
    pub ux: Option<String>,
    pub uy: Option<String>,
    /// Declares `A` constant; by default inferred from the expressions.
    pub constant_a: Option<bool>,
}

impl ProblemConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::from_str_with_format(&text, is_toml)
    }

    pub fn from_str_with_format(text: &str, is_toml: bool) -> Result<Self> {
        if is_toml {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let explicit = [&self.a11, &self.a12, &self.a22, &self.f, &self.g, &self.u, &self.ux, &self.uy]
            .iter()
            .any(|o| o.is_some());
        if let Some(case) = &self.case {
            if explicit {
                return Err(Error::Config(
                    "`case` cannot be combined with explicit expressions".into(),
                ));
            }
            return builtin_case(case);
        }

        let parse = |key: &str, v: &Option<String>, default: &str| -> Result<Expr> {
            parse_expr(v.as_deref().unwrap_or(default))
                .map_err(|e| Error::Config(format!("{key}: {e}")))
        };
        let a11 = parse("A11", &self.a11, "1")?;
        let a12 = parse("A12", &self.a12, "0")?;
        let a22 = parse("A22", &self.a22, "1")?;
        let Some(f) = &self.f else {
            return Err(Error::Config("missing source expression `f`".into()));
        };
        let f = parse("f", &Some(f.clone()), "0")?;

        let exact = match (&self.u, &self.ux, &self.uy) {
            (None, None, None) => None,
            (Some(u), Some(ux), Some(uy)) => {
                let u = parse("u", &Some(u.clone()), "0")?;
                let ux = parse("ux", &Some(ux.clone()), "0")?;
                let uy = parse("uy", &Some(uy.clone()), "0")?;
                Some((u, ux, uy))
            }
            _ => return Err(Error::Config("`u` requires both `ux` and `uy`".into())),
        };
        let g = match (&self.g, &exact) {
            (Some(g), _) => parse("g", &Some(g.clone()), "0")?,
            (None, Some((u, _, _))) => u.clone(),
            (None, None) => {
                return Err(Error::Config(
                    "missing boundary data `g` (or an exact solution `u`)".into(),
                ))
            }
        };
        let constant = self.constant_a.unwrap_or(
            !(a11.depends_on_position() || a12.depends_on_position() || a22.depends_on_position()),
        );

        Ok(ProblemSpec {
            name: "config".into(),
            coefficients: CoefficientField {
                a11: ScalarField::from_expr(a11),
                a12: ScalarField::from_expr(a12),
                a22: ScalarField::from_expr(a22),
                gradient: None,
                constant,
            },
            source: ScalarField::from_expr(f),
            dirichlet: ScalarField::from_expr(g),
            exact: exact.map(|(u, ux, uy)| ExactSolution {
                u: ScalarField::from_expr(u),
                grad: Arc::new(move |p| [ux.eval(p), uy.eval(p)]),
            }),
        })
    }
}
