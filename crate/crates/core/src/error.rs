use thiserror::Error;

use crate::expr::ExprError;

/// Errors raised by model construction, solvers and synthesis routines.
///
/// Check *failures* (a non-skew `J` found during validation, a Casimir that
/// does not annihilate `R`) are report entries, not errors; these variants
/// are for calls that cannot produce a meaningful result.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} violated (worst residual {residual:e})")]
    Structure { what: String, residual: f64 },

    #[error("{0} must be constant (state-independent) for this operation")]
    NotConstant(&'static str),

    #[error("singular problem: {0}")]
    Singular(String),

    #[error("Newton iteration did not converge at t = {t} after {iterations} iterations")]
    NonConvergence { t: f64, iterations: usize },

    #[error("evaluation failed at t = {t}: {source}")]
    BlowUp {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trajectory file: {0}")]
    Trajectory(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn structure(what: impl Into<String>, residual: f64) -> Self {
        Error::Structure {
            what: what.into(),
            residual,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
