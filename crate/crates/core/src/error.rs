use thiserror::Error;

/// Errors raised by model construction, the oracles and the harness.
///
/// Divergence of a stochastic run is not an error; it is reported through
/// [`crate::algorithms::RunLog`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The behavior policy does not explore every pair, or its state chain is
    /// reducible or periodic.
    #[error("exploration assumption violated (pi_b(a|s) > 0, irreducible and aperiodic chain): {0}")]
    Assumption(String),
    #[error("rank deficiency: {0}")]
    Rank(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("mixing time exceeds the cap of {0} steps; the chain is close to periodic")]
    MixingCap(usize),
    #[error("rejection sampling accepted nothing in {0} proposals; rescale the radius")]
    Sampling(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}
