use thiserror::Error;

/// Crate-wide error type. Numerical routines return `Err` rather than
/// poisoning results with NaN; solver-level faults carry enough context to
/// locate the offending iteration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is not symmetric: entry ({i},{j}) = {a:e} but ({j},{i}) = {b:e}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("problem is inconsistent: {0}")]
    BadProblem(String),

    #[error("dense materialisation of order {n} exceeds budget of {budget} bytes")]
    MemoryBudget { n: usize, budget: u64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("conjugate gradient did not reach tolerance {tol:e} within {iters} iterations (residual {residual:e})")]
    CgNonConvergence { tol: f64, iters: usize, residual: f64 },

    #[error("conjugate gradient breakdown: p'Qp = {pqp:e} <= 0 at iteration {k}")]
    CgBreakdown { k: u64, pqp: f64 },

    #[error(
        "monotone line-search outcome at iteration {k} (coordinate {coord}): \
         the relaxed objective has no interior minimiser along this coordinate, \
         which cannot happen after initialisation on a consistent problem"
    )]
    MonotoneOutcome { k: u64, coord: usize },

    #[error("numeric fault at iteration {k}: {what}")]
    NumericFault { k: u64, what: &'static str },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn bad_problem(msg: impl Into<String>) -> Self {
        Error::BadProblem(msg.into())
    }
}
