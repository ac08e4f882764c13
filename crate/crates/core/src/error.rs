use thiserror::Error;

use crate::convex_core::SolveReport;

/// Errors raised by the solvers and the problem-file front end.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the domain of a map, e.g. `|y| >= a` for `phi`.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid boundary law: {0}")]
    InvalidLaw(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Inner iterative procedure (root find, prox loop, fixed point) gave up.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A solver ran out of iterations; the last report is attached.
    #[error("solver did not converge after {iterations} iterations (interior {interior:.3e}, boundary {boundary:.3e})",
        iterations = .0.iterations, interior = .0.interior_residual, boundary = .0.boundary_residual)]
    NotConverged(Box<SolveReport>),

    #[error("no feasible starting point: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
