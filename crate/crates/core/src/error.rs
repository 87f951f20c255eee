use thiserror::Error;

/// Errors produced by mesh construction, assembly and the solution pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("mesh has no facet topology; call build_topology first")]
    MissingTopology,

    #[error("quadrature of degree {requested} is not supported (max {max})")]
    UnsupportedDegree { requested: usize, max: usize },

    #[error("matrix does not have full row rank")]
    RankDeficient,

    #[error("constraint matrix on cell {cell} is rank deficient")]
    SingularConstraint { cell: usize },

    #[error("kernel of the constraint matrix on cell {cell} has dimension {found}, expected {expected}")]
    RankAnomaly {
        cell: usize,
        found: usize,
        expected: usize,
    },

    #[error("matrix is not positive definite (pivot {index} = {pivot:e}); the penalty parameter may be too small")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("linear system is singular (zero pivot in column {column})")]
    Singular { column: usize },

    #[error("relative residual {residual:e} exceeds tolerance {tol:e} after refinement")]
    Inaccurate { residual: f64, tol: f64 },

    #[error("could not build thread pool: {0}")]
    ThreadPool(String),

    #[error("dimension mismatch: {0}")]
    Structural(String),

    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),

    #[error("unknown problem case `{0}`")]
    UnknownCase(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by user input (problem description, options, files)
    /// rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::UnsupportedDegree { .. }
                | Error::Syntax { .. }
                | Error::UnknownIdentifier(_)
                | Error::UnknownCase(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::ThreadPool(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
