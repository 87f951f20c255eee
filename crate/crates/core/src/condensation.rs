//! Static condensation: per-cell particular solutions of `B u = F_ψ`,
//! orthonormal kernel bases `M` of `B`, the reduced global system and the
//! reconstruction `Ũ = u + M U'`.

use rayon::prelude::*;

use crate::assembly::{BlockSystem, ConstraintBlock, DGSolution};
use crate::basis::dim;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SaddleFactor};
use crate::mesh::PolyMesh;

/// Relative drop tolerance for Gram–Schmidt.
pub const KERNEL_DROP_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalCondensation {
    /// `u^{(l)}` per cell, length `N_k`.
    pub particular: Vec<Vec<f64>>,
    /// `M^{(l)}` per cell, `N_k × (2k+1)` with orthonormal columns.
    pub kernels: Vec<DenseMatrix>,
    /// Whether one kernel basis was shared by every cell.
    pub shared_kernel: bool,
}

impl LocalCondensation {
    pub fn num_cells(&self) -> usize {
        self.particular.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.kernels.first().map_or(0, DenseMatrix::cols)
    }
}

fn factor_for(cell: usize, b: &DenseMatrix) -> Result<SaddleFactor> {
    SaddleFactor::new(b).map_err(|e| match e {
        Error::RankDeficient => Error::SingularConstraint { cell },
        other => other,
    })
}

/// Solves `u + Bᵀp = 0`, `Bu = F_ψ`, giving the minimum-norm `u`.
pub fn local_particular_solution(b: &DenseMatrix, f_psi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let fac = SaddleFactor::new(b)?;
    Ok(fac.solve(&vec![0.0; b.cols()], f_psi))
}

/// Orthonormal basis of `ker B` built from the projections of the canonical
/// vectors. A supplied `reuse` basis is returned unchanged.
pub fn kernel_basis(b: &DenseMatrix, reuse: Option<&DenseMatrix>) -> Result<DenseMatrix> {
    if let Some(m) = reuse {
        return Ok(m.clone());
    }
    kernel_from_factor(&SaddleFactor::new(b)?, 0)
}

fn kernel_from_factor(fac: &SaddleFactor, cell: usize) -> Result<DenseMatrix> {
    let n = fac.unknown_count();
    let want = n - fac.constraint_count();
    let zero_c = vec![0.0; fac.constraint_count()];
    let mut projections = Vec::with_capacity(n);
    let mut found = Vec::new();
    for s in 0..n {
        let mut e = vec![0.0; n];
        e[s] = 1.0;
        projections.push(fac.solve(&e, &zero_c).0);
        found = crate::linalg::mgs_orthonormalize(&projections, KERNEL_DROP_TOL, Some(want));
        if found.len() == want {
            break;
        }
    }
    if found.len() != want {
        return Err(Error::RankAnomaly {
            cell,
            found: found.len(),
            expected: want,
        });
    }
    Ok(DenseMatrix::from_columns(n, &found))
}

/// Particular solutions and kernel bases for every cell. With
/// `share_kernel`, the basis of cell 0 is used everywhere (valid when `A` is
/// constant, since `B` then depends on the cell only through its shift).
pub fn condense(cons: &ConstraintBlock, share_kernel: bool) -> Result<LocalCondensation> {
    let shared = if share_kernel && !cons.b.is_empty() {
        Some(kernel_from_factor(&factor_for(0, &cons.b[0])?, 0)?)
    } else {
        None
    };
    let per_cell: Vec<(Vec<f64>, DenseMatrix)> = cons
        .b
        .par_iter()
        .zip(&cons.f_psi)
        .enumerate()
        .map(|(cell, (b, f))| {
            let fac = factor_for(cell, b)?;
            let u = fac.solve(&vec![0.0; b.cols()], f).0;
            let m = match &shared {
                Some(m) => m.clone(),
                None => kernel_from_factor(&fac, cell)?,
            };
            Ok((u, m))
        })
        .collect::<Result<_>>()?;
    let (particular, kernels) = per_cell.into_iter().unzip();
    Ok(LocalCondensation {
        particular,
        kernels,
        shared_kernel: shared.is_some(),
    })
}

/// `A'^{(lm)} = M_lᵀ A^{(lm)} M_m`, `F'^{(l)} = M_lᵀ (F^{(l)} − Σ_m A^{(lm)} u^{(m)})`.
pub fn reduce_system(sys: &BlockSystem, cond: &LocalCondensation) -> Result<BlockSystem> {
    if cond.num_cells() != sys.num_cells {
        return Err(Error::Structural(format!(
            "condensation has {} cells, system has {}",
            cond.num_cells(),
            sys.num_cells
        )));
    }
    if cond
        .kernels
        .iter()
        .any(|m| m.rows() != sys.block_dim || m.cols() != cond.reduced_dim())
        || cond.particular.iter().any(|u| u.len() != sys.block_dim)
    {
        return Err(Error::Structural("kernel basis does not match block dimension".into()));
    }
    let nr = cond.reduced_dim();
    let entries: Vec<(&(usize, usize), &DenseMatrix)> = sys.blocks.iter().collect();
    let reduced: Vec<DenseMatrix> = entries
        .par_iter()
        .map(|(&(l, m), blk)| cond.kernels[l].tr_matmul(&blk.matmul(&cond.kernels[m])))
        .collect();

    let mut out = BlockSystem::new(sys.num_cells, nr);
    let mut shifted = sys.rhs.clone();
    for (((l, m), blk), red) in entries.into_iter().zip(reduced) {
        out.blocks.insert((*l, *m), red);
        let au = blk.matvec(&cond.particular[*m]);
        for (f, a) in shifted[*l].iter_mut().zip(au) {
            *f -= a;
        }
    }
    for (l, f) in shifted.iter().enumerate() {
        out.rhs[l] = cond.kernels[l].tr_matvec(f);
    }
    Ok(out)
}

/// `Ũ^{(l)} = u^{(l)} + M^{(l)} U'^{(l)}`.
pub fn reconstruct(mesh: &PolyMesh, k: usize, reduced: &[f64], cond: &LocalCondensation) -> Result<DGSolution> {
    let nr = cond.reduced_dim();
    if reduced.len() != cond.num_cells() * nr || dim(k) != cond.particular.first().map_or(0, Vec::len) {
        return Err(Error::Structural("reduced solution does not match condensation".into()));
    }
    let mut sol = DGSolution::zeros(mesh, k);
    for (l, coeffs) in sol.coeffs.iter_mut().enumerate() {
        let mu = cond.kernels[l].matvec(&reduced[l * nr..(l + 1) * nr]);
        for ((c, u), v) in coeffs.iter_mut().zip(&cond.particular[l]).zip(mu) {
            *c = u + v;
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_constraints, assemble_sip};
    use crate::basis::{BasisSpec, Derivatives};
    use crate::geometry::Point;
    use crate::mesh::{generate, HeModeKind};
    use crate::problem::{builtin_case, ProblemConfig};
    use crate::quadrature::{map_to_triangle, triangle_rule};

    fn laplace_unit_source() -> crate::ProblemSpec {
        ProblemConfig {
            f: Some("1".into()),
            g: Some("0".into()),
            constant_a: Some(true),
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn zero_source_gives_zero_particular() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]]);
        let (u, p) = local_particular_solution(&b, &[0.0, 0.0]).unwrap();
        assert!(u.iter().chain(&p).all(|v| *v == 0.0));
    }

    #[test]
    fn particular_solution_is_in_row_space() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0, 1.0], [0.0, 1.0, 1.0, -1.0]]);
        let (u, p) = local_particular_solution(&b, &[1.0, 2.0]).unwrap();
        let bu = b.matvec(&u);
        assert!((bu[0] - 1.0).abs() < 1e-14 && (bu[1] - 2.0).abs() < 1e-14);
        let btp = b.tr_matvec(&p);
        assert!(u.iter().zip(btp).all(|(a, b)| (a + b).abs() < 1e-14));
        let m = kernel_basis(&b, None).unwrap();
        assert!(m.tr_matvec(&u).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn kernel_dimensions_and_orthonormality() {
        for case in ["poisson-sin", "variable-a"] {
            let p = builtin_case(case).unwrap();
            let mesh = generate(4, HeModeKind::Facet).unwrap();
            for k in 2..=5 {
                let cons = assemble_constraints(&mesh, k, &p).unwrap();
                let cond = condense(&cons, false).unwrap();
                for (l, m) in cond.kernels.iter().enumerate() {
                    assert_eq!(m.cols(), 2 * k + 1);
                    let mut g = m.tr_matmul(m);
                    g.add_scaled(-1.0, &DenseMatrix::identity(2 * k + 1));
                    assert!(g.max_abs() < 1e-12, "{case} k={k} cell {l}");
                    let bm = cons.b[l].matmul(m);
                    assert!(bm.max_abs() <= 1e-11 * cons.b[l].max_abs());
                    let bu = cons.b[l].matvec(&cond.particular[l]);
                    let scale = crate::linalg::norm2(&cons.f_psi[l]).max(1e-300);
                    let res: Vec<f64> = bu.iter().zip(&cons.f_psi[l]).map(|(a, b)| a - b).collect();
                    assert!(crate::linalg::norm2(&res) <= 1e-11 * scale);
                }
            }
        }
    }

    #[test]
    fn laplace_kernel_is_harmonic_quadratics() {
        let mesh = generate(2, HeModeKind::Facet).unwrap();
        let cons = assemble_constraints(&mesh, 2, &laplace_unit_source()).unwrap();
        let cond = condense(&cons, false).unwrap();
        let basis = BasisSpec::new(2, Point::default());
        let idx = |a, b| basis.index_of(a, b).unwrap();
        let mut harmonic = vec![vec![0.0; 6]; 5];
        harmonic[0][idx(0, 0)] = 1.0;
        harmonic[1][idx(1, 0)] = 1.0;
        harmonic[2][idx(0, 1)] = 1.0;
        harmonic[3][idx(1, 1)] = 1.0;
        harmonic[4][idx(2, 0)] = 1.0;
        harmonic[4][idx(0, 2)] = -1.0;
        for m in &cond.kernels {
            for h in &harmonic {
                let proj = m.matvec(&m.tr_matvec(h));
                assert!(proj.iter().zip(h).all(|(a, b)| (a - b).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn particular_solution_matches_mean_of_source() {
        // A = I, f = 1, k = 2: the mean of −Δu_loc over each cell must be 1.
        let mesh = generate(3, HeModeKind::Facet).unwrap();
        let cons = assemble_constraints(&mesh, 2, &laplace_unit_source()).unwrap();
        let cond = condense(&cons, true).unwrap();
        let rule = triangle_rule(2).unwrap();
        for (l, u) in cond.particular.iter().enumerate() {
            let basis = BasisSpec::new(2, mesh.seeds[l]);
            let mut integral = 0.0;
            for &t in &mesh.cells[l] {
                for (x, w) in map_to_triangle(&rule, mesh.tri.triangle_points(t)) {
                    let h = basis.eval(x, Derivatives::Hessian).hessians;
                    let lap: f64 = h.iter().zip(u).map(|(h, c)| c * (h[0][0] + h[1][1])).sum();
                    integral -= w * lap;
                }
            }
            assert!((integral / mesh.cell_area(l) - 1.0).abs() < 1e-11, "cell {l}");
        }
    }

    #[test]
    fn shared_basis_is_cell_zero_basis() {
        let mesh = generate(3, HeModeKind::Facet).unwrap();
        let p = builtin_case("poisson-sin").unwrap();
        let cons = assemble_constraints(&mesh, 3, &p).unwrap();
        let shared = condense(&cons, true).unwrap();
        assert!(shared.shared_kernel);
        for (l, m) in shared.kernels.iter().enumerate() {
            assert_eq!(m, &shared.kernels[0]);
            assert!(cons.b[l].matmul(m).max_abs() <= 1e-11 * cons.b[l].max_abs());
        }
        assert_eq!(kernel_basis(&cons.b[1], Some(&shared.kernels[0])).unwrap(), shared.kernels[0]);
    }

    #[test]
    fn rank_deficient_cell_is_named() {
        let mut cons = ConstraintBlock {
            b: vec![DenseMatrix::from_rows(&[[1.0, 0.0, 0.0]]), DenseMatrix::zeros(1, 3)],
            f_psi: vec![vec![1.0], vec![0.0]],
        };
        assert!(matches!(condense(&cons, false), Err(Error::SingularConstraint { cell: 1 })));
        cons.b.swap(0, 1);
        assert!(matches!(condense(&cons, true), Err(Error::SingularConstraint { cell: 0 })));
    }

    #[test]
    fn reduction_formulas() {
        let mesh = generate(2, HeModeKind::Facet).unwrap();
        let p = builtin_case("variable-a").unwrap();
        let sys = assemble_sip(&mesh, 2, 12.0, &p).unwrap();
        let cons = assemble_constraints(&mesh, 2, &p).unwrap();
        let cond = condense(&cons, false).unwrap();
        let red = reduce_system(&sys, &cond).unwrap();
        assert_eq!(red.block_dim, 5);
        assert_eq!(red.blocks.len(), sys.blocks.len());
        assert!(red.symmetry_defect() < 1e-12);

        // Reduced operator applied to U' equals Mᵀ A (M U').
        let u_red: Vec<f64> = (0..red.unknowns()).map(|i| (i as f64 * 0.37).sin()).collect();
        let zero = LocalCondensation {
            particular: vec![vec![0.0; 6]; mesh.num_cells()],
            ..cond.clone()
        };
        let full = reconstruct(&mesh, 2, &u_red, &zero).unwrap().to_vector();
        let a_full = sys.matvec(&full);
        let lhs = red.matvec(&u_red);
        for l in 0..mesh.num_cells() {
            let want = cond.kernels[l].tr_matvec(&a_full[l * 6..(l + 1) * 6]);
            for (a, b) in lhs[l * 5..(l + 1) * 5].iter().zip(want) {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
        // With zero particular solutions F' = MᵀF.
        let red0 = reduce_system(&sys, &zero).unwrap();
        for l in 0..mesh.num_cells() {
            assert_eq!(red0.rhs[l], cond.kernels[l].tr_matvec(&sys.rhs[l]));
        }
        // Reconstructed kernel components satisfy B Ũ = 0.
        for (l, c) in reconstruct(&mesh, 2, &u_red, &zero).unwrap().coeffs.iter().enumerate() {
            assert!(crate::linalg::norm2(&cons.b[l].matvec(c)) < 1e-11 * cons.b[l].frobenius_norm());
        }
    }

    #[test]
    fn mismatched_dimensions_are_structural_errors() {
        let mesh = generate(2, HeModeKind::Facet).unwrap();
        let p = builtin_case("poisson-sin").unwrap();
        let sys = assemble_sip(&mesh, 3, 24.0, &p).unwrap();
        let cons = assemble_constraints(&mesh, 2, &p).unwrap();
        let cond = condense(&cons, false).unwrap();
        assert!(matches!(reduce_system(&sys, &cond), Err(Error::Structural(_))));
        assert!(matches!(reconstruct(&mesh, 2, &[0.0; 3], &cond), Err(Error::Structural(_))));
    }
}
