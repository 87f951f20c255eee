//! SIP bilinear/linear forms, the per-cell constraint matrices used by static
//! condensation, and error norms.
//!
//! With `[v] = v|_{T1} − v|_{T2}` and `{A∇v·n} = ½ A(∇v|_{T1} + ∇v|_{T2})·n`
//! (on ∂Ω: `[v] = v`, `{A∇v·n} = A∇v·n`),
//!
//! ```text
//! a_h(u,v) = Σ_T ∫_T A∇u·∇v − Σ_E ∫_E ({A∇u·n}[v] + {A∇v·n}[u]) + Σ_E γ/h_E ∫_E [u][v]
//! L_h(v)   = Σ_T ∫_T f v + Σ_{E⊂∂Ω} ∫_E g (γ/h_E v − A∇v·n)
//! ```
//!
//! Cell integrals run over the cell's background triangles, facet integrals
//! over the background edges of the facet.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::basis::{dim, BasisSpec, BasisValues, Derivatives};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::DenseMatrix;
use crate::mesh::{FacetEdge, PolyMesh};
use crate::problem::{CoefficientField, ExactSolution, ProblemSpec};
use crate::quadrature::{map_to_edge, map_to_triangle, segment_rule, triangle_rule, QuadRule};

/// Block-sparse symmetric system: one dense `b × b` block per coupled cell
/// pair, plus a per-cell right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSystem {
    pub num_cells: usize,
    pub block_dim: usize,
    pub blocks: BTreeMap<(usize, usize), DenseMatrix>,
    pub rhs: Vec<Vec<f64>>,
}

impl BlockSystem {
    pub fn new(num_cells: usize, block_dim: usize) -> Self {
        Self {
            num_cells,
            block_dim,
            blocks: BTreeMap::new(),
            rhs: vec![vec![0.0; block_dim]; num_cells],
        }
    }

    pub fn unknowns(&self) -> usize {
        self.num_cells * self.block_dim
    }

    pub fn block_mut(&mut self, row: usize, col: usize) -> &mut DenseMatrix {
        let b = self.block_dim;
        self.blocks
            .entry((row, col))
            .or_insert_with(|| DenseMatrix::zeros(b, b))
    }

    /// Flattened right-hand side, cell-major.
    pub fn rhs_vector(&self) -> Vec<f64> {
        self.rhs.concat()
    }

    /// `A·x` for a cell-major vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let b = self.block_dim;
        assert_eq!(x.len(), self.unknowns());
        let mut y = vec![0.0; x.len()];
        for (&(r, c), blk) in &self.blocks {
            let prod = blk.matvec(&x[c * b..(c + 1) * b]);
            for (yi, p) in y[r * b..(r + 1) * b].iter_mut().zip(prod) {
                *yi += p;
            }
        }
        y
    }

    /// `f − A·x` accumulated in double-double arithmetic (TwoSum/TwoProduct),
    /// accurate even when `‖A‖‖x‖ ≫ ‖f‖`.
    pub fn residual_compensated(&self, x: &[f64], f: &[f64]) -> Vec<f64> {
        let b = self.block_dim;
        assert_eq!(x.len(), self.unknowns());
        let mut hi = f.to_vec();
        let mut lo = vec![0.0; f.len()];
        for (&(r, c), blk) in &self.blocks {
            let xc = &x[c * b..(c + 1) * b];
            for i in 0..b {
                let (mut s, mut e) = (hi[r * b + i], lo[r * b + i]);
                for (a, xv) in blk.row(i).iter().zip(xc) {
                    let p = -a * xv;
                    let perr = (-a).mul_add(*xv, -p);
                    let t = s + p;
                    let z = t - s;
                    e += (s - (t - z)) + (p - z) + perr;
                    s = t;
                }
                hi[r * b + i] = s;
                lo[r * b + i] = e;
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    /// Largest `‖A^{(lm)} − (A^{(ml)})ᵀ‖_F / ‖A^{(lm)}‖_F` over all blocks;
    /// infinite when the pattern is not symmetric.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (&(r, c), blk) in &self.blocks {
            let Some(other) = self.blocks.get(&(c, r)) else {
                return f64::INFINITY;
            };
            let mut diff = blk.clone();
            diff.add_scaled(-1.0, &other.transpose());
            let scale = blk.frobenius_norm();
            if scale > 0.0 {
                worst = worst.max(diff.frobenius_norm() / scale);
            } else if diff.frobenius_norm() > 0.0 {
                return f64::INFINITY;
            }
        }
        worst
    }

    /// Cells coupled to `cell`, ascending (including `cell` itself).
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        self.blocks.range((cell, 0)..(cell + 1, 0)).map(|(&(_, c), _)| c)
    }
}

/// Piecewise polynomial function: coefficients per cell in the shifted
/// monomial basis of that cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DGSolution {
    pub bases: Vec<BasisSpec>,
    pub coeffs: Vec<Vec<f64>>,
}

impl DGSolution {
    pub fn zeros(mesh: &PolyMesh, k: usize) -> Self {
        Self {
            bases: cell_bases(mesh, k),
            coeffs: vec![vec![0.0; dim(k)]; mesh.num_cells()],
        }
    }

    /// Splits a cell-major vector into per-cell coefficient vectors.
    pub fn from_vector(mesh: &PolyMesh, k: usize, v: &[f64]) -> Result<Self> {
        let nk = dim(k);
        if v.len() != mesh.num_cells() * nk {
            return Err(Error::Structural(format!(
                "solution vector of length {} for {} cells of dimension {nk}",
                v.len(),
                mesh.num_cells()
            )));
        }
        Ok(Self {
            bases: cell_bases(mesh, k),
            coeffs: v.chunks(nk).map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn degree(&self) -> usize {
        self.bases.first().map_or(0, |b| b.degree)
    }

    /// Value and gradient on cell `cell` at `p`.
    pub fn eval(&self, cell: usize, p: Point) -> (f64, [f64; 2]) {
        self.bases[cell].eval_combination(&self.coeffs[cell], p)
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.coeffs.concat()
    }

    /// `‖self − other‖_{L²(Ω)}` for two functions on the same mesh and bases.
    pub fn l2_distance(&self, other: &DGSolution, mesh: &PolyMesh) -> Result<f64> {
        if self.bases != other.bases {
            return Err(Error::Structural("solutions use different bases".into()));
        }
        let diff = DGSolution {
            bases: self.bases.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        };
        Ok(error_norms(&diff, &ExactSolution::zero(), mesh)?.0)
    }

    pub fn l2_norm(&self, mesh: &PolyMesh) -> Result<f64> {
        Ok(error_norms(self, &ExactSolution::zero(), mesh)?.0)
    }
}

/// Shifted monomial bases of degree `k`, one per cell.
pub fn cell_bases(mesh: &PolyMesh, k: usize) -> Vec<BasisSpec> {
    mesh.seeds.iter().map(|&s| BasisSpec::new(k, s)).collect()
}

/// Quadrature rules used for polynomial degree `k`: degree `2k+2` on
/// triangles and `k+2` Gauss points on edges.
#[derive(Clone, Debug)]
pub struct Rules {
    pub volume: QuadRule,
    pub edge: QuadRule,
}

impl Rules {
    pub fn for_degree(k: usize) -> Result<Self> {
        Ok(Self {
            volume: triangle_rule(2 * k + 2)?,
            edge: segment_rule(2 * k + 3)?,
        })
    }
}

fn check_inputs(mesh: &PolyMesh, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("polynomial degree must be >= 2, got {k}")));
    }
    if !mesh.has_topology() {
        return Err(Error::MissingTopology);
    }
    Ok(())
}

#[inline]
fn apply(a: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
}

#[inline]
fn fluxes(a: &[[f64; 2]; 2], bv: &BasisValues, n: Point, out: &mut Vec<f64>) {
    out.clear();
    out.extend(bv.gradients.iter().map(|&g| {
        let ag = apply(a, g);
        ag[0] * n.x + ag[1] * n.y
    }));
}

struct FacetContribution {
    /// `(row cell, col cell, block)`.
    blocks: Vec<(usize, usize, DenseMatrix)>,
    rhs: Option<(usize, Vec<f64>)>,
}

/// Assembles `A^{(lm)}_{ij} = a_h(φ_i^{(l)}, φ_j^{(m)})` and `F^{(l)}_i = L_h(φ_i^{(l)})`.
///
/// Per-cell and per-facet contributions are computed in parallel and summed
/// in a fixed order, so the result does not depend on the thread count.
pub fn assemble_sip(mesh: &PolyMesh, k: usize, gamma: f64, problem: &ProblemSpec) -> Result<BlockSystem> {
    check_inputs(mesh, k)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("penalty parameter must be positive, got {gamma}")));
    }
    let rules = Rules::for_degree(k)?;
    let bases = cell_bases(mesh, k);
    let nk = dim(k);
    let coef = &problem.coefficients;

    let volume: Vec<(DenseMatrix, Vec<f64>)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let mut blk = DenseMatrix::zeros(nk, nk);
            let mut rhs = vec![0.0; nk];
            let mut bv = BasisValues::default();
            let mut ag = vec![[0.0; 2]; nk];
            for &t in &mesh.cells[c] {
                for (x, w) in map_to_triangle(&rules.volume, mesh.tri.triangle_points(t)) {
                    bases[c].eval_into(x, Derivatives::Gradient, &mut bv);
                    let a = coef.matrix(x);
                    for (agj, &g) in ag.iter_mut().zip(&bv.gradients) {
                        *agj = apply(&a, g);
                    }
                    for i in 0..nk {
                        let gi = bv.gradients[i];
                        let row = &mut blk.as_mut_slice()[i * nk..(i + 1) * nk];
                        for (e, agj) in row.iter_mut().zip(&ag) {
                            *e += w * (gi[0] * agj[0] + gi[1] * agj[1]);
                        }
                    }
                    let fw = w * problem.source.eval(x);
                    for (r, v) in rhs.iter_mut().zip(&bv.values) {
                        *r += fw * v;
                    }
                }
            }
            (blk, rhs)
        })
        .collect();

    let facets: Vec<FacetContribution> = mesh
        .facets
        .par_iter()
        .map(|f| facet_contribution(f.cells, &f.edges, f.h_e, gamma, &bases, coef, problem, &rules))
        .collect();

    let mut sys = BlockSystem::new(mesh.num_cells(), nk);
    for (c, (blk, rhs)) in volume.into_iter().enumerate() {
        sys.block_mut(c, c).add_scaled(1.0, &blk);
        sys.rhs[c] = rhs;
    }
    for fc in facets {
        for (r, c, blk) in fc.blocks {
            sys.block_mut(r, c).add_scaled(1.0, &blk);
        }
        if let Some((c, rhs)) = fc.rhs {
            for (a, b) in sys.rhs[c].iter_mut().zip(rhs) {
                *a += b;
            }
        }
    }
    Ok(sys)
}

#[allow(clippy::too_many_arguments)]
fn facet_contribution(
    cells: (usize, Option<usize>),
    edges: &[FacetEdge],
    h_e: f64,
    gamma: f64,
    bases: &[BasisSpec],
    coef: &CoefficientField,
    problem: &ProblemSpec,
    rules: &Rules,
) -> FacetContribution {
    let nk = bases[0].len();
    let pen = gamma / h_e;
    let (c1, c2) = cells;
    let mut b1 = BasisValues::default();
    let mut b2 = BasisValues::default();
    let mut fl1 = Vec::with_capacity(nk);
    let mut fl2 = Vec::with_capacity(nk);

    match c2 {
        None => {
            let mut blk = DenseMatrix::zeros(nk, nk);
            let mut rhs = vec![0.0; nk];
            for e in edges {
                for (x, w) in map_to_edge(&rules.edge, e.endpoints) {
                    bases[c1].eval_into(x, Derivatives::Gradient, &mut b1);
                    fluxes(&coef.matrix(x), &b1, e.normal, &mut fl1);
                    for i in 0..nk {
                        for j in 0..nk {
                            blk[(i, j)] += w
                                * (-fl1[j] * b1.values[i] - fl1[i] * b1.values[j]
                                    + pen * b1.values[i] * b1.values[j]);
                        }
                    }
                    let g = problem.dirichlet.eval(x);
                    for i in 0..nk {
                        rhs[i] += w * g * (pen * b1.values[i] - fl1[i]);
                    }
                }
            }
            FacetContribution {
                blocks: vec![(c1, c1, blk)],
                rhs: Some((c1, rhs)),
            }
        }
        Some(c2) => {
            // Index 0 ↔ T1 (sign +1), 1 ↔ T2 (sign −1).
            let cell = [c1, c2];
            let sign = [1.0, -1.0];
            let mut blks: Vec<DenseMatrix> = (0..4).map(|_| DenseMatrix::zeros(nk, nk)).collect();
            for e in edges {
                for (x, w) in map_to_edge(&rules.edge, e.endpoints) {
                    let a = coef.matrix(x);
                    bases[c1].eval_into(x, Derivatives::Gradient, &mut b1);
                    bases[c2].eval_into(x, Derivatives::Gradient, &mut b2);
                    fluxes(&a, &b1, e.normal, &mut fl1);
                    fluxes(&a, &b2, e.normal, &mut fl2);
                    let vals = [&b1.values, &b2.values];
                    let fl = [&fl1, &fl2];
                    for r in 0..2 {
                        for c in 0..2 {
                            let (sr, sc) = (sign[r], sign[c]);
                            let blk = &mut blks[2 * r + c];
                            for i in 0..nk {
                                // test φ_i on side r, trial φ_j on side c
                                let (vi, fi) = (vals[r][i], fl[r][i]);
                                for j in 0..nk {
                                    let (vj, fj) = (vals[c][j], fl[c][j]);
                                    blk[(i, j)] += w
                                        * (-0.5 * fj * sr * vi - 0.5 * fi * sc * vj
                                            + pen * sr * sc * vi * vj);
                                }
                            }
                        }
                    }
                }
            }
            let mut blocks = Vec::with_capacity(4);
            for (idx, blk) in blks.into_iter().enumerate() {
                blocks.push((cell[idx / 2], cell[idx % 2], blk));
            }
            FacetContribution { blocks, rhs: None }
        }
    }
}

/// Per-cell constraint data for static condensation:
/// `B^{(l)}_{ij} = ∫_T ψ_i ℒφ_j` (rows `ψ ∈ P_{k−2}`, columns `φ ∈ P_k`) and
/// `F_ψ^{(l)}_i = ∫_T f ψ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBlock {
    pub b: Vec<DenseMatrix>,
    pub f_psi: Vec<Vec<f64>>,
}

/// Builds `B^{(l)}` from the integrated-by-parts form
/// `∫_T ∇ψ_i·A∇φ_j − ∫_{∂T} ψ_i n·A∇φ_j`, which needs no derivatives of `A`.
pub fn assemble_constraints(mesh: &PolyMesh, k: usize, problem: &ProblemSpec) -> Result<ConstraintBlock> {
    check_inputs(mesh, k)?;
    let rules = Rules::for_degree(k)?;
    let boundaries = mesh.cell_boundaries();
    let coef = &problem.coefficients;
    let (nk, nq) = (dim(k), dim(k - 2));

    let per_cell: Vec<(DenseMatrix, Vec<f64>)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let phi = BasisSpec::new(k, mesh.seeds[c]);
            let psi = BasisSpec::new(k - 2, mesh.seeds[c]);
            let mut b = DenseMatrix::zeros(nq, nk);
            let mut fpsi = vec![0.0; nq];
            let (mut pv, mut qv) = (BasisValues::default(), BasisValues::default());
            let mut fl = Vec::with_capacity(nk);

            for &t in &mesh.cells[c] {
                for (x, w) in map_to_triangle(&rules.volume, mesh.tri.triangle_points(t)) {
                    phi.eval_into(x, Derivatives::Gradient, &mut pv);
                    psi.eval_into(x, Derivatives::Gradient, &mut qv);
                    let a = coef.matrix(x);
                    for j in 0..nk {
                        let ag = apply(&a, pv.gradients[j]);
                        for i in 0..nq {
                            let gq = qv.gradients[i];
                            b[(i, j)] += w * (gq[0] * ag[0] + gq[1] * ag[1]);
                        }
                    }
                    let fw = w * problem.source.eval(x);
                    for (r, v) in fpsi.iter_mut().zip(&qv.values) {
                        *r += fw * v;
                    }
                }
            }
            for e in &boundaries[c] {
                for (x, w) in map_to_edge(&rules.edge, e.endpoints) {
                    phi.eval_into(x, Derivatives::Gradient, &mut pv);
                    psi.eval_into(x, Derivatives::Value, &mut qv);
                    fluxes(&coef.matrix(x), &pv, e.normal, &mut fl);
                    for i in 0..nq {
                        for j in 0..nk {
                            b[(i, j)] -= w * qv.values[i] * fl[j];
                        }
                    }
                }
            }
            (b, fpsi)
        })
        .collect();

    let (b, f_psi) = per_cell.into_iter().unzip();
    Ok(ConstraintBlock { b, f_psi })
}

/// `(‖u − u_h‖_{L²(Ω)}, |u − u_h|_{H¹(𝒯_h)})`, integrated at degree `2k+2`.
pub fn error_norms(sol: &DGSolution, exact: &ExactSolution, mesh: &PolyMesh) -> Result<(f64, f64)> {
    let k = sol.degree();
    let rule = triangle_rule(2 * k + 2)?;
    let parts: Vec<(f64, f64)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (mut l2, mut h1) = (0.0, 0.0);
            for &t in &mesh.cells[c] {
                for (x, w) in map_to_triangle(&rule, mesh.tri.triangle_points(t)) {
                    let (v, g) = sol.eval(c, x);
                    let ue = exact.u.eval(x);
                    let ge = (exact.grad)(x);
                    l2 += w * (ue - v) * (ue - v);
                    h1 += w * ((ge[0] - g[0]).powi(2) + (ge[1] - g[1]).powi(2));
                }
            }
            (l2, h1)
        })
        .collect();
    let (l2, h1) = parts.into_iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok((l2.sqrt(), h1.sqrt()))
}

/// `(Σ_T |v|²_{H¹(T)} + h_T^{-1} ‖[v]‖²_{L²(∂T)})^{1/2}`, with `[v] = v` on ∂Ω.
pub fn triple_norm(sol: &DGSolution, mesh: &PolyMesh) -> Result<f64> {
    if !mesh.has_topology() {
        return Err(Error::MissingTopology);
    }
    let k = sol.degree();
    let rules = Rules::for_degree(k)?;
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        for &t in &mesh.cells[c] {
            for (x, w) in map_to_triangle(&rules.volume, mesh.tri.triangle_points(t)) {
                let (_, g) = sol.eval(c, x);
                total += w * (g[0] * g[0] + g[1] * g[1]);
            }
        }
    }
    for f in &mesh.facets {
        let (c1, c2) = f.cells;
        let weight = match c2 {
            Some(c2) => 1.0 / mesh.h_t[c1] + 1.0 / mesh.h_t[c2],
            None => 1.0 / mesh.h_t[c1],
        };
        for e in &f.edges {
            for (x, w) in map_to_edge(&rules.edge, e.endpoints) {
                let jump = sol.eval(c1, x).0 - c2.map_or(0.0, |c2| sol.eval(c2, x).0);
                total += weight * w * jump * jump;
            }
        }
    }
    Ok(total.sqrt())
}

/// Integral of `v²` for the piecewise polynomial `q` of degree `k−2` with
/// per-cell weights `h_T²`, i.e. `‖q‖_h²` for the multiplier space.
pub fn weighted_multiplier_norm(mesh: &PolyMesh, k: usize, p: &[Vec<f64>]) -> Result<f64> {
    let rule = triangle_rule(2 * k)?;
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let psi = BasisSpec::new(k - 2, mesh.seeds[c]);
        let mut cell = 0.0;
        for &t in &mesh.cells[c] {
            for (x, w) in map_to_triangle(&rule, mesh.tri.triangle_points(t)) {
                let v: f64 = psi
                    .eval(x, Derivatives::Value)
                    .values
                    .iter()
                    .zip(&p[c])
                    .map(|(a, b)| a * b)
                    .sum();
                cell += w * v * v;
            }
        }
        total += mesh.h_t[c] * mesh.h_t[c] * cell;
    }
    Ok(total.sqrt())
}
