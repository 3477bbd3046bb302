use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that had to be inverted was numerically singular.
    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// An evaluation produced NaN or infinity; `last_finite` holds the last
    /// state (θ followed by λ) at which everything was finite.
    #[error("divergence: non-finite value in {context} after {iterations} iterations")]
    Divergence {
        context: String,
        iterations: usize,
        last_finite: Vec<f64>,
    },

    #[error("initial λ solve did not converge in {iterations} iterations (residual {residual:e})")]
    InitLambda {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("observation {index} is isolated: all kernel weights vanish")]
    IsolatedPoint { index: usize },

    #[error("spline fit failed: {0}")]
    SplineFit(String),

    #[error("experiment failed: {failed} of {total} replicates did not converge")]
    TooManyFailures { failed: usize, total: usize },

    #[error("no converged replicates to aggregate")]
    NoConvergedReplicates,

    #[error("step halving exhausted: {0}")]
    StepHalving(String),
}

impl Error {
    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::Singular {
            context: context.into(),
        }
    }
}
