//! Small dense kernels: row-major matrices, Householder-based saddle solves,
//! modified Gram–Schmidt and Jacobi singular values.
//!
//! Everything here works on matrices of at most a few dozen rows; no blocking
//! or BLAS-style tuning is attempted.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(rows: usize, cols: &[C]) -> Self {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            let c = c.as_ref();
            assert_eq!(c.len(), rows, "column length mismatch");
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> Self {
        assert_eq!(self.rows, rhs.rows, "tr_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let rrow = rhs.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Factorization of a wide constraint matrix `B` (m×n, m ≤ n, full row rank)
/// used to solve saddle systems
///
/// ```text
///     u + Bᵀp = rhs_u
///     B u     = rhs_c
/// ```
///
/// `Bᵀ = QR` is computed by Householder reflections, so the row space of `B`
/// is represented by the orthonormal columns of `Q`. The solve never forms
/// `BBᵀ`, whose condition number is the square of that of `B`.
#[derive(Clone, Debug)]
pub struct SaddleFactor {
    /// Thin `Q`, n×m.
    q: DenseMatrix,
    /// Upper triangular `R`, m×m.
    r: DenseMatrix,
}

impl SaddleFactor {
    pub fn new(b: &DenseMatrix) -> Result<Self> {
        let (m, n) = (b.rows(), b.cols());
        if m > n {
            return Err(Error::Structural(format!(
                "saddle constraint matrix is {m}x{n}; expected at most as many rows as columns"
            )));
        }
        let (q, r) = householder_qr(&b.transpose());
        let rmax = (0..m).fold(0.0_f64, |acc, i| acc.max(r[(i, i)].abs()));
        for i in 0..m {
            let d = r[(i, i)].abs();
            if !(d > 1e-14 * rmax) || !d.is_finite() {
                return Err(Error::RankDeficient);
            }
        }
        Ok(Self { q, r })
    }

    pub fn constraint_count(&self) -> usize {
        self.r.rows()
    }

    pub fn unknown_count(&self) -> usize {
        self.q.rows()
    }

    /// Returns `(u, p)`.
    pub fn solve(&self, rhs_u: &[f64], rhs_c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.constraint_count();
        assert_eq!(rhs_u.len(), self.unknown_count());
        assert_eq!(rhs_c.len(), m);

        // t = Qᵀ rhs_u, s = R⁻ᵀ rhs_c
        let t = self.q.tr_matvec(rhs_u);
        let mut s = rhs_c.to_vec();
        for i in 0..m {
            let mut acc = s[i];
            for j in 0..i {
                acc -= self.r[(j, i)] * s[j];
            }
            s[i] = acc / self.r[(i, i)];
        }
        let ts: Vec<f64> = t.iter().zip(&s).map(|(a, b)| a - b).collect();

        let qts = self.q.matvec(&ts);
        let u: Vec<f64> = rhs_u.iter().zip(&qts).map(|(a, b)| a - b).collect();

        // p = R⁻¹ (t − s)
        let mut p = ts;
        for i in (0..m).rev() {
            let mut acc = p[i];
            for j in i + 1..m {
                acc -= self.r[(i, j)] * p[j];
            }
            p[i] = acc / self.r[(i, i)];
        }
        (u, p)
    }
}

/// Solves `u + Bᵀp = rhs_u`, `Bu = rhs_c` for a full-row-rank `B`.
///
/// The result equals `u = rhs_u − Bᵀ(BBᵀ)⁻¹(B·rhs_u − rhs_c)`; with `rhs_u = 0`
/// this is the minimum-norm solution of `Bu = rhs_c`.
pub fn solve_saddle_dense(
    b: &DenseMatrix,
    rhs_u: &[f64],
    rhs_c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rhs_u.len() != b.cols() || rhs_c.len() != b.rows() {
        return Err(Error::Structural(format!(
            "saddle right-hand sides of length {}/{} for a {}x{} constraint",
            rhs_u.len(),
            rhs_c.len(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(SaddleFactor::new(b)?.solve(rhs_u, rhs_c))
}

/// Householder QR of a tall matrix `a` (n×m, n ≥ m). Returns thin `Q` (n×m)
/// and `R` (m×m).
fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (n, m) = (a.rows(), a.cols());
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(m);

    for j in 0..m {
        let mut v: Vec<f64> = (j..n).map(|i| work[(i, j)]).collect();
        let alpha = norm2(&v);
        if alpha == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm = norm2(&v);
        v.iter_mut().for_each(|x| *x /= vnorm);
        for c in j..m {
            let proj: f64 = (j..n).map(|i| v[i - j] * work[(i, c)]).sum();
            for i in j..n {
                work[(i, c)] -= 2.0 * v[i - j] * proj;
            }
        }
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            r[(i, j)] = work[(i, j)];
        }
    }

    // Q = H_0 H_1 … H_{m-1} applied to the first m canonical vectors.
    let mut q = DenseMatrix::zeros(n, m);
    for i in 0..m {
        q[(i, i)] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for c in 0..m {
            let proj: f64 = (j..n).map(|i| v[i - j] * q[(i, c)]).sum();
            for i in j..n {
                q[(i, c)] -= 2.0 * v[i - j] * proj;
            }
        }
    }
    (q, r)
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
///
/// A candidate is discarded when its norm after projection falls below
/// `drop_tol` times the largest norm retained so far. Stops early once
/// `max_count` vectors have been retained, if given.
pub fn mgs_orthonormalize<V: AsRef<[f64]>>(
    vectors: &[V],
    drop_tol: f64,
    max_count: Option<usize>,
) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut max_norm = 0.0_f64;
    for cand in vectors {
        if max_count.is_some_and(|c| basis.len() >= c) {
            break;
        }
        let mut w = cand.as_ref().to_vec();
        for _pass in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let nw = norm2(&w);
        if !nw.is_finite() || nw == 0.0 || nw < drop_tol * max_norm {
            continue;
        }
        max_norm = max_norm.max(nw);
        w.iter_mut().for_each(|x| *x /= nw);
        basis.push(w);
    }
    basis
}

/// Singular values in descending order, by one-sided Jacobi rotations.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    // Work on the orientation with at least as many rows as columns.
    let a = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, cols) = (a.rows(), a.cols());
    let mut colsv: Vec<Vec<f64>> = (0..cols).map(|j| a.column(j)).collect();

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&colsv[p], &colsv[p]);
                let beta = dot(&colsv[q], &colsv[q]);
                let gamma = dot(&colsv[p], &colsv[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let xp = colsv[p][i];
                    let xq = colsv[q][i];
                    colsv[p][i] = c * xp - s * xq;
                    colsv[q][i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = colsv.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank: number of singular values above `rel_tol · σ_max`.
pub fn rank_svd(m: &DenseMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// In-place dense Cholesky `a = LLᵀ`; the lower triangle of `a` is replaced by `L`.
pub fn cholesky_in_place(a: &mut DenseMatrix) -> Result<()> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    Ok(())
}

/// Solves `LLᵀx = b` given the factor produced by [`cholesky_in_place`].
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn saddle_two_unknowns_by_hand() {
        let b = DenseMatrix::from_rows(&[[1.0, 0.0]]);
        let (u, p) = solve_saddle_dense(&b, &[0.0, 0.0], &[3.0]).unwrap();
        assert!(approx(&u, &[3.0, 0.0], 1e-15));
        assert!(approx(&p, &[-3.0], 1e-15));
    }

    #[test]
    fn saddle_zero_rhs() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 1.0, -1.0]]);
        let (u, p) = solve_saddle_dense(&b, &[0.0; 3], &[0.0; 2]).unwrap();
        assert!(u.iter().chain(&p).all(|v| *v == 0.0));
    }

    #[test]
    fn saddle_orthonormal_rows() {
        let s = 0.5_f64.sqrt();
        let b = DenseMatrix::from_rows(&[[s, s, 0.0], [0.0, 0.0, 1.0]]);
        let c = [2.0, -1.0];
        let (u, _) = solve_saddle_dense(&b, &[0.0; 3], &c).unwrap();
        assert!(approx(&u, &b.tr_matvec(&c), 1e-15));
    }

    #[test]
    fn saddle_rejects_rank_deficient() {
        let b = DenseMatrix::from_rows(&[[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]);
        assert!(matches!(
            solve_saddle_dense(&b, &[0.0; 3], &[1.0, 2.0]),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn mgs_examples() {
        let out = mgs_orthonormalize(&[vec![1.0, 0.0], vec![0.0, 2.0]], 1e-10, None);
        assert!(approx(&out[0], &[1.0, 0.0], 0.0));
        assert!(approx(&out[1], &[0.0, 1.0], 0.0));

        let out = mgs_orthonormalize(&[vec![1.0, 0.0], vec![1.0, 1e-14]], 1e-10, None);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn mgs_stops_at_max_count() {
        let v: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(mgs_orthonormalize(&v, 1e-10, Some(2)).len(), 2);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_svd(&DenseMatrix::identity(3), 1e-10), 3);
        assert_eq!(rank_svd(&DenseMatrix::zeros(3, 3), 1e-10), 0);
        assert_eq!(
            rank_svd(&DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]), 1e-10),
            1
        );
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = DenseMatrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, -5.0, 0.0]]);
        let sv = singular_values(&m);
        assert!(approx(&sv, &[5.0, 3.0], 1e-14));
    }

    #[test]
    fn cholesky_two_by_two() {
        let mut a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        cholesky_in_place(&mut a).unwrap();
        let x = cholesky_solve(&a, &[3.0, 3.0]);
        assert!(approx(&x, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn cholesky_detects_indefinite() {
        let mut a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            cholesky_in_place(&mut a),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }
}
