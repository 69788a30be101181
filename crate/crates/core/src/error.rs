use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants split into two families: input problems (bad shapes, states
/// outside a chart, malformed expressions) and numerical outcomes (an
/// optimizer that never reached its target, a graph without cycles, a
/// fixed-point iteration that stalled). The CLI maps the first family to a
/// validation exit code and the second to a non-convergence exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("hamiltonian supremum diverges: value {value:e} exceeds cap {cap:e}")]
    Divergence { value: f64, cap: f64 },

    #[error("endpoint not reached: best residual {best_residual:e} after {restarts} restarts")]
    Unreached { best_residual: f64, restarts: usize },

    #[error("disconnected: {0}")]
    Disconnected(String),

    #[error("point {0} is unreachable (all incoming costs infinite)")]
    UnreachablePoint(usize),

    #[error("fixed-point iteration did not converge; final residual {:e}", trace.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { trace: Vec<f64> },

    #[error("indeterminate expansion: endpoint signal below {threshold:e} for every epsilon")]
    IndeterminateExpansion { threshold: f64 },

    #[error("transport problem infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    /// True for errors that describe a numerical outcome rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::Unreached { .. }
                | Error::Disconnected(_)
                | Error::UnreachablePoint(_)
                | Error::NonConvergence { .. }
                | Error::IndeterminateExpansion { .. }
                | Error::Infeasible(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
