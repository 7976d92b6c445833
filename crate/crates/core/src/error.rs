use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A linear system was singular or too ill-conditioned to solve.
    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("collinear design columns {columns:?}")]
    Collinear { columns: Vec<usize> },

    #[error("integration produced a non-finite state at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    /// The scaled Lasso ran out of alternations; the last iterate is kept
    /// so callers can decide whether it is usable.
    #[error("scaled lasso did not converge within {iterations} alternations (last sigma = {sigma})")]
    ScaledLassoConvergence {
        iterations: usize,
        sigma: f64,
        coefficients: Vec<f64>,
    },

    #[error("slab variance collapsed to {0:e}; re-initialize the mixture fit")]
    DegenerateSlab(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning(_)
                | Error::Divergence { .. }
                | Error::Convergence { .. }
                | Error::ScaledLassoConvergence { .. }
                | Error::DegenerateSlab(_)
        )
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
