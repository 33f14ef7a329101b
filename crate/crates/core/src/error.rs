use crate::geometry::GridTag;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("shape mismatch: expected field on {expected}, found {found}")]
    ShapeMismatch { expected: GridTag, found: GridTag },

    #[error("infeasible right-hand side: mean {mean:.3e} exceeds solvability tolerance")]
    InfeasibleRhs { mean: f64 },

    #[error("nonlinear solver stalled after {iterations} iterations (residual {last:.3e})", last = .residual_history.last().copied().unwrap_or(f64::NAN))]
    SolverStall {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error("linear subsolve failed after {iterations} iterations (residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("class mismatch: integral {integral:.12e}, expected {expected:.12e}")]
    ClassMismatch { integral: f64, expected: f64 },

    #[error("potential is not Kähler: positivity margin {margin:.6e}")]
    NotKahler { margin: f64 },

    #[error("metric leaves the Kähler cone along the path at t = {t:.4}: margin {margin:.6e}")]
    PathNotKahler { t: f64, margin: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal consistency check failed: {what} (deviation {deviation:.3e})")]
    InternalConsistency { what: &'static str, deviation: f64 },

    #[error("gauge fix failed: {0}")]
    GaugeFix(String),

    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
