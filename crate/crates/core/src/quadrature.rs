//! Quadrature on the reference triangle and on segments.
//!
//! Triangle rules of degree ≤ 2 are the classical symmetric centroid and
//! three-point rules. Higher degrees use the conical product of Gauss–Legendre
//! rules through the collapsed map `(s, t) ↦ (s, t(1 − s))`, which has positive
//! weights and interior points for every degree.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{signed_area, Point};

/// Highest polynomial degree for which a triangle rule is shipped.
pub const MAX_TRIANGLE_DEGREE: usize = 20;
/// Highest polynomial degree for which a segment rule is shipped.
pub const MAX_SEGMENT_DEGREE: usize = 79;

/// Reference triangle `{(0,0), (1,0), (0,1)}` has measure 1/2.
pub const TRIANGLE_MEASURE: f64 = 0.5;
/// Reference segment `[-1, 1]` has measure 2.
pub const SEGMENT_MEASURE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule {
    /// Reference coordinates. For segment rules only the `x` component is used.
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Rule on the reference triangle exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<QuadRule> {
    if degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::UnsupportedDegree {
            requested: degree,
            max: MAX_TRIANGLE_DEGREE,
        });
    }
    let rule = match degree {
        0 | 1 => QuadRule {
            points: vec![Point::new(1.0 / 3.0, 1.0 / 3.0)],
            weights: vec![0.5],
            exact_degree: 1,
        },
        2 => QuadRule {
            points: vec![
                Point::new(1.0 / 6.0, 1.0 / 6.0),
                Point::new(2.0 / 3.0, 1.0 / 6.0),
                Point::new(1.0 / 6.0, 2.0 / 3.0),
            ],
            weights: vec![1.0 / 6.0; 3],
            exact_degree: 2,
        },
        _ => collapsed_rule(degree),
    };
    Ok(rule)
}

fn collapsed_rule(degree: usize) -> QuadRule {
    // x^a y^b becomes s^a (1−s)^(b+1) t^b: degree ≤ degree+1 in s, ≤ degree in t.
    let npts = (degree + 2).div_ceil(2);
    let (gx, gw) = gauss_legendre(npts);
    let mut points = Vec::with_capacity(npts * npts);
    let mut weights = Vec::with_capacity(npts * npts);
    for (&xi, &wi) in gx.iter().zip(&gw) {
        let s = 0.5 * (xi + 1.0);
        for (&xj, &wj) in gx.iter().zip(&gw) {
            let t = 0.5 * (xj + 1.0);
            points.push(Point::new(s, t * (1.0 - s)));
            weights.push(0.25 * wi * wj * (1.0 - s));
        }
    }
    QuadRule {
        points,
        weights,
        exact_degree: degree,
    }
}

/// Gauss–Legendre rule on `[-1, 1]` with `⌈(degree+1)/2⌉` points.
pub fn segment_rule(degree: usize) -> Result<QuadRule> {
    if degree > MAX_SEGMENT_DEGREE {
        return Err(Error::UnsupportedDegree {
            requested: degree,
            max: MAX_SEGMENT_DEGREE,
        });
    }
    let npts = (degree + 1).div_ceil(2).max(1);
    let (x, w) = gauss_legendre(npts);
    Ok(QuadRule {
        points: x.into_iter().map(|t| Point::new(t, 0.0)).collect(),
        weights: w,
        exact_degree: 2 * npts - 1,
    })
}

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d.is_finite() { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (pn, pnm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
    (pn, d)
}

/// A physical integration region.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    Triangle([Point; 3]),
    Edge([Point; 2]),
}

/// Quadrature points and weights of `rule` mapped onto triangle `tri`.
/// Weights include the Jacobian.
pub fn map_to_triangle(rule: &QuadRule, tri: [Point; 3]) -> impl Iterator<Item = (Point, f64)> + '_ {
    let [a, b, c] = tri;
    let jac = 2.0 * signed_area(a, b, c).abs();
    let (e1, e2) = (b - a, c - a);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(move |(p, &w)| (a + p.x * e1 + p.y * e2, w * jac))
}

/// Segment rule mapped onto the edge `a–b`. Weights include the Jacobian.
pub fn map_to_edge(rule: &QuadRule, [a, b]: [Point; 2]) -> impl Iterator<Item = (Point, f64)> + '_ {
    let half = 0.5 * a.dist(b);
    let mid = a.midpoint(b);
    let dir = 0.5 * (b - a);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(move |(p, &w)| (mid + p.x * dir, w * half))
}

/// `Σ w_q |J| f(x_q)` over a physical triangle or edge.
///
/// A degenerate region (zero measure) integrates to 0 and logs a warning.
pub fn integrate<F: Fn(Point) -> f64>(f: F, region: Region, rule: &QuadRule) -> f64 {
    let measure = match region {
        Region::Triangle([a, b, c]) => signed_area(a, b, c).abs(),
        Region::Edge([a, b]) => a.dist(b),
    };
    if measure == 0.0 {
        log::warn!("integration over a degenerate region {region:?}");
        return 0.0;
    }
    match region {
        Region::Triangle(t) => map_to_triangle(rule, t).map(|(x, w)| w * f(x)).sum(),
        Region::Edge(e) => map_to_edge(rule, e).map(|(x, w)| w * f(x)).sum(),
    }
}
