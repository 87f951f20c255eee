//! Symmetric interior penalty discontinuous Galerkin (SIP) and its statically
//! condensed variant (scSIP) for `−∇·(A∇u) = f` on polygonal meshes obtained
//! by agglomerating a background triangulation.
//!
//! The pipelines live in [`solve`]: [`solve::run_sip`], [`solve::run_scsip`]
//! and the monolithic saddle-point reference [`solve::run_saddle_oracle`].

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod basis;
pub mod problem;
pub mod mesh;
pub mod assembly;
pub mod condensation;
pub mod solve;
pub mod study;

pub use assembly::{BlockSystem, DGSolution};
pub use error::{Error, Result};
pub use geometry::Point;
pub use mesh::{HeMode, HeModeKind, PolyMesh, TriMesh};
pub use problem::{builtin_case, ProblemSpec};
pub use solve::{Method, SolveOptions, SolveReport};
pub use study::ConvergenceRow;
