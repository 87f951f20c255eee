//! Monomials shifted to a cell's reference point,
//! `φ_(i1,i2)(x, y) = (x − O_x)^i1 (y − O_y)^i2`, ordered with `i1` outer
//! (0..=k) and `i2` inner (0..=k−i1).

use crate::geometry::Point;

/// Dimension of the bivariate polynomials of total degree ≤ `k`.
pub const fn dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Dimension of `P_{k-2}`; zero when `k < 2`.
pub const fn dim_minus_two(k: usize) -> usize {
    if k < 2 {
        0
    } else {
        dim(k - 2)
    }
}

/// How many derivatives [`BasisSpec::eval`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Derivatives {
    Value,
    Gradient,
    Hessian,
}

#[derive(Clone, Debug, Default)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
    pub hessians: Vec<[[f64; 2]; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    pub degree: usize,
    pub shift: Point,
    exponents: Vec<(usize, usize)>,
}

impl BasisSpec {
    pub fn new(degree: usize, shift: Point) -> Self {
        let exponents = (0..=degree)
            .flat_map(|i1| (0..=degree - i1).map(move |i2| (i1, i2)))
            .collect();
        Self {
            degree,
            shift,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Multi-index `(i1, i2)` of basis function `i`.
    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exponents
    }

    /// Position of the multi-index `(i1, i2)` in the ordering.
    pub fn index_of(&self, i1: usize, i2: usize) -> Option<usize> {
        if i1 + i2 > self.degree {
            return None;
        }
        // Rows i1' < i1 contribute (k − i1' + 1) entries each.
        let k = self.degree;
        Some(i1 * (k + 1) - i1 * (i1.saturating_sub(1)) / 2 + i2)
    }

    pub fn eval(&self, x: Point, up_to: Derivatives) -> BasisValues {
        let mut out = BasisValues::default();
        self.eval_into(x, up_to, &mut out);
        out
    }

    /// Like [`eval`](Self::eval) but reuses the output buffers.
    pub fn eval_into(&self, x: Point, up_to: Derivatives, out: &mut BasisValues) {
        let k = self.degree;
        let dx = x.x - self.shift.x;
        let dy = x.y - self.shift.y;
        let mut px = [0.0; 32];
        let mut py = [0.0; 32];
        assert!(k < 32, "basis degree too large");
        px[0] = 1.0;
        py[0] = 1.0;
        for i in 1..=k {
            px[i] = px[i - 1] * dx;
            py[i] = py[i - 1] * dy;
        }
        // d/dx of t^a = a t^(a-1)
        let dpow = |p: &[f64; 32], a: usize| if a == 0 { 0.0 } else { a as f64 * p[a - 1] };
        let ddpow = |p: &[f64; 32], a: usize| {
            if a < 2 {
                0.0
            } else {
                (a * (a - 1)) as f64 * p[a - 2]
            }
        };

        out.values.clear();
        out.gradients.clear();
        out.hessians.clear();
        for &(a, b) in &self.exponents {
            out.values.push(px[a] * py[b]);
            if up_to >= Derivatives::Gradient {
                out.gradients.push([dpow(&px, a) * py[b], px[a] * dpow(&py, b)]);
            }
            if up_to >= Derivatives::Hessian {
                let hxy = dpow(&px, a) * dpow(&py, b);
                out.hessians
                    .push([[ddpow(&px, a) * py[b], hxy], [hxy, px[a] * ddpow(&py, b)]]);
            }
        }
    }

    /// Evaluates the polynomial with the given coefficients at `x`.
    pub fn eval_combination(&self, coeffs: &[f64], x: Point) -> (f64, [f64; 2]) {
        let bv = self.eval(x, Derivatives::Gradient);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (i, &c) in coeffs.iter().enumerate() {
            v += c * bv.values[i];
            g[0] += c * bv.gradients[i][0];
            g[1] += c * bv.gradients[i][1];
        }
        (v, g)
    }
}
