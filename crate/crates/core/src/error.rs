use thiserror::Error;

/// Errors raised by the numeric core and every module built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular to tolerance at pivot {pivot} (|pivot| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no convergence after {iterations} iterations")]
    Convergence {
        iterations: usize,
        /// Last iterate, when the algorithm has one.
        last: Option<Vec<f64>>,
    },

    #[error("degenerate spectrum: minimum gap {gap:e} below threshold {threshold:e}")]
    Degenerate { gap: f64, threshold: f64 },

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("index {index} out of range (largest allowed {max})")]
    Range { index: usize, max: usize },

    #[error("problem too large: {0}")]
    Size(String),
}

impl Error {
    /// True for the numeric failure classes (singularity, degeneracy, blow-up,
    /// non-convergence) as opposed to caller mistakes.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::Degenerate { .. }
                | Error::BlowUp { .. }
                | Error::Convergence { .. }
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
