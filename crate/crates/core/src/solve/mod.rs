//! Linear solvers and the three end-to-end pipelines.

pub mod sparse;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_constraints, assemble_sip, error_norms, weighted_multiplier_norm, BlockSystem, DGSolution,
};
use crate::basis::{dim, dim_minus_two};
use crate::condensation::{condense, reconstruct, reduce_system};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::mesh::PolyMesh;
use crate::problem::ProblemSpec;

pub use sparse::{BandLu, OrderingKind, SkylineCholesky};

/// Target for `‖AU − F‖ / ‖F‖`.
pub const RESIDUAL_TOL: f64 = 1e-12;
const MAX_REFINEMENTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sip,
    Scsip,
    Saddle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sip, Method::Scsip, Method::Saddle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sip => "sip",
            Method::Scsip => "scsip",
            Method::Saddle => "saddle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}` (expected sip, scsip or saddle)")))
    }
}

/// Row weights of the constraint block in the saddle-point oracle.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum MultiplierWeights {
    /// `h_T²`, matching `b_h(q, v) = Σ_T h_T² ∫_T q ℒv`.
    #[default]
    CellSizeSquared,
    Unit,
    /// One positive weight per cell.
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Penalty parameter; `None` means [`default_gamma`].
    pub gamma: Option<f64>,
    /// Share the kernel basis of cell 0 across cells in scSIP. `None`
    /// follows the problem's constant-coefficient flag.
    pub share_kernel: Option<bool>,
    pub multiplier_weights: MultiplierWeights,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gamma: None,
            share_kernel: None,
            multiplier_weights: MultiplierWeights::CellSizeSquared,
        }
    }
}

impl SolveOptions {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma: Some(gamma),
            ..Self::default()
        }
    }
}

/// `γ = 2k(k+1)`.
pub fn default_gamma(k: usize) -> f64 {
    2.0 * (k * (k + 1)) as f64
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub refinements: usize,
    pub ordering: OrderingKind,
}

fn relative_residual(sys: &BlockSystem, x: &[f64], f: &[f64]) -> (Vec<f64>, f64) {
    let r = sys.residual_compensated(x, f);
    let nf = norm2(f);
    let rel = if nf > 0.0 { norm2(&r) / nf } else { norm2(&r) };
    (r, rel)
}

fn refine(
    sys: &BlockSystem,
    ordering: OrderingKind,
    solve: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<LinearSolution> {
    let f = sys.rhs_vector();
    let mut x = solve(&f);
    let (mut r, mut rel) = relative_residual(sys, &x, &f);
    let mut refinements = 0;
    while rel > RESIDUAL_TOL && refinements < MAX_REFINEMENTS {
        let dx = solve(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let (r2, rel2) = relative_residual(sys, &trial, &f);
        refinements += 1;
        if !(rel2 < rel) {
            break;
        }
        x = trial;
        r = r2;
        rel = rel2;
    }
    if !(rel <= RESIDUAL_TOL) {
        return Err(Error::Inaccurate {
            residual: rel,
            tol: RESIDUAL_TOL,
        });
    }
    Ok(LinearSolution {
        x,
        relative_residual: rel,
        refinements,
        ordering,
    })
}

/// Envelope Cholesky with iterative refinement.
pub fn solve_spd(sys: &BlockSystem) -> Result<LinearSolution> {
    let fac = SkylineCholesky::factor(sys)?;
    log::debug!(
        "cholesky: {} unknowns, {:?} ordering, envelope {}",
        sys.unknowns(),
        fac.ordering,
        fac.envelope_size()
    );
    refine(sys, fac.ordering, |b| fac.solve(b))
}

/// Banded LU with partial pivoting and iterative refinement.
pub fn solve_indefinite(sys: &BlockSystem) -> Result<LinearSolution> {
    let fac = BandLu::factor(sys)?;
    log::debug!(
        "band lu: {} unknowns, {:?} ordering, bandwidth {}",
        sys.unknowns(),
        fac.ordering,
        fac.bandwidth()
    );
    refine(sys, fac.ordering, |b| fac.solve(b))
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub method: Method,
    pub k: usize,
    pub gamma: f64,
    pub num_cells: usize,
    /// Size of the global linear system.
    pub unknowns: usize,
    pub relative_residual: f64,
    pub refinements: usize,
    pub ordering: OrderingKind,
    pub wall_time: Duration,
    pub solution: DGSolution,
    /// Multiplier coefficients per cell (saddle oracle only), normalized to
    /// the `h_T²`-weighted constraint.
    pub multiplier: Option<Vec<Vec<f64>>>,
    /// `‖p_h‖_h = (Σ_T h_T² ‖p_h‖²_{L²(T)})^{1/2}`.
    pub multiplier_norm: Option<f64>,
}

impl SolveReport {
    /// `(L², broken H¹)` errors against the exact solution, if known.
    pub fn errors(&self, problem: &ProblemSpec, mesh: &PolyMesh) -> Result<Option<(f64, f64)>> {
        match &problem.exact {
            Some(exact) => Ok(Some(error_norms(&self.solution, exact, mesh)?)),
            None => Ok(None),
        }
    }
}

fn gamma_of(k: usize, opts: &SolveOptions) -> f64 {
    opts.gamma.unwrap_or_else(|| default_gamma(k))
}

/// Assembles and solves the full SIP system (`N_e·N_k` unknowns).
pub fn run_sip(mesh: &PolyMesh, k: usize, problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let gamma = gamma_of(k, opts);
    let sys = assemble_sip(mesh, k, gamma, problem)?;
    let lin = solve_spd(&sys)?;
    let solution = DGSolution::from_vector(mesh, k, &lin.x)?;
    Ok(SolveReport {
        method: Method::Sip,
        k,
        gamma,
        num_cells: mesh.num_cells(),
        unknowns: sys.unknowns(),
        relative_residual: lin.relative_residual,
        refinements: lin.refinements,
        ordering: lin.ordering,
        wall_time: start.elapsed(),
        solution,
        multiplier: None,
        multiplier_norm: None,
    })
}

/// Statically condensed SIP: local constraint solves, reduced global system
/// of `N_e(2k+1)` unknowns, reconstruction.
pub fn run_scsip(mesh: &PolyMesh, k: usize, problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let gamma = gamma_of(k, opts);
    let sys = assemble_sip(mesh, k, gamma, problem)?;
    let cons = assemble_constraints(mesh, k, problem)?;
    let share = opts.share_kernel.unwrap_or(problem.coefficients.constant);
    let cond = condense(&cons, share)?;
    let reduced = reduce_system(&sys, &cond)?;
    let lin = solve_spd(&reduced)?;
    let solution = reconstruct(mesh, k, &lin.x, &cond)?;
    Ok(SolveReport {
        method: Method::Scsip,
        k,
        gamma,
        num_cells: mesh.num_cells(),
        unknowns: reduced.unknowns(),
        relative_residual: lin.relative_residual,
        refinements: lin.refinements,
        ordering: lin.ordering,
        wall_time: start.elapsed(),
        solution,
        multiplier: None,
        multiplier_norm: None,
    })
}

fn oracle_weights(mesh: &PolyMesh, w: &MultiplierWeights) -> Result<Vec<f64>> {
    match w {
        MultiplierWeights::CellSizeSquared => Ok(mesh.h_t.iter().map(|h| h * h).collect()),
        MultiplierWeights::Unit => Ok(vec![1.0; mesh.num_cells()]),
        MultiplierWeights::Custom(v) => {
            if v.len() != mesh.num_cells() {
                return Err(Error::InvalidArgument(format!(
                    "{} multiplier weights for {} cells",
                    v.len(),
                    mesh.num_cells()
                )));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidArgument("multiplier weights must be positive".into()));
            }
            Ok(v.clone())
        }
    }
}

/// Monolithic `[[A, B̃ᵀ], [B̃, 0]]` system with `B̃^{(l)} = w_l B^{(l)}` and
/// right-hand side `(F, w_l F_ψ)`, unknowns interleaved per cell.
pub fn assemble_saddle(mesh: &PolyMesh, k: usize, gamma: f64, problem: &ProblemSpec, weights: &[f64]) -> Result<BlockSystem> {
    let sys = assemble_sip(mesh, k, gamma, problem)?;
    let cons = assemble_constraints(mesh, k, problem)?;
    let (nk, nq) = (dim(k), dim_minus_two(k));
    let mut out = BlockSystem::new(mesh.num_cells(), nk + nq);
    for (&(l, m), blk) in &sys.blocks {
        let dst = out.block_mut(l, m);
        for i in 0..nk {
            for j in 0..nk {
                dst[(i, j)] = blk[(i, j)];
            }
        }
    }
    for l in 0..mesh.num_cells() {
        let w = weights[l];
        let dst = out.block_mut(l, l);
        for i in 0..nq {
            for j in 0..nk {
                let v = w * cons.b[l][(i, j)];
                dst[(nk + i, j)] = v;
                dst[(j, nk + i)] = v;
            }
        }
        out.rhs[l][..nk].copy_from_slice(&sys.rhs[l]);
        for i in 0..nq {
            out.rhs[l][nk + i] = w * cons.f_psi[l][i];
        }
    }
    Ok(out)
}

/// Reference solution of the constrained formulation by one indefinite
/// factorization; its `u` coincides with the scSIP solution.
pub fn run_saddle_oracle(mesh: &PolyMesh, k: usize, problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let gamma = gamma_of(k, opts);
    let weights = oracle_weights(mesh, &opts.multiplier_weights)?;
    let sys = assemble_saddle(mesh, k, gamma, problem, &weights)?;
    let lin = solve_indefinite(&sys)?;
    let (nk, nq) = (dim(k), dim_minus_two(k));
    let mut u = Vec::with_capacity(mesh.num_cells() * nk);
    let mut p = Vec::with_capacity(mesh.num_cells());
    for (l, chunk) in lin.x.chunks(nk + nq).enumerate() {
        u.extend_from_slice(&chunk[..nk]);
        let h2 = mesh.h_t[l] * mesh.h_t[l];
        p.push(chunk[nk..].iter().map(|v| v * weights[l] / h2).collect::<Vec<f64>>());
    }
    let norm = weighted_multiplier_norm(mesh, k, &p)?;
    Ok(SolveReport {
        method: Method::Saddle,
        k,
        gamma,
        num_cells: mesh.num_cells(),
        unknowns: sys.unknowns(),
        relative_residual: lin.relative_residual,
        refinements: lin.refinements,
        ordering: lin.ordering,
        wall_time: start.elapsed(),
        solution: DGSolution::from_vector(mesh, k, &u)?,
        multiplier: Some(p),
        multiplier_norm: Some(norm),
    })
}

pub fn run(method: Method, mesh: &PolyMesh, k: usize, problem: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    match method {
        Method::Sip => run_sip(mesh, k, problem, opts),
        Method::Scsip => run_scsip(mesh, k, problem, opts),
        Method::Saddle => run_saddle_oracle(mesh, k, problem, opts),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (the global pool when `None`).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("thread count must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
