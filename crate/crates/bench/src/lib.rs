//! Shared fixtures for the pipeline benchmarks.

use polydg::mesh::{generate, HeModeKind};
use polydg::{builtin_case, PolyMesh, ProblemSpec};

/// Uniform-h_E mesh of parameter `n` and the named built-in problem.
pub fn fixture(case: &str, n: usize) -> (PolyMesh, ProblemSpec) {
    let mesh = generate(n, HeModeKind::Uniform).expect("mesh generation");
    let problem = builtin_case(case).expect("built-in case");
    (mesh, problem)
}
