use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integral of r^{k} w(r) diverges: no decay found up to r = {radius}")]
    DivergentIntegral { k: u32, radius: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invalid spectral density: {0}")]
    InvalidDensity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid spacing {spacing} exceeds the Nyquist bound pi/{cutoff} = {bound}")]
    Nyquist {
        spacing: f64,
        cutoff: f64,
        bound: f64,
    },

    #[error("grid needs {requested} points but the memory budget allows {limit}")]
    MemoryBudget { requested: usize, limit: usize },

    #[error("point {0:?} is outside the interpolation domain")]
    OutOfDomain(Vec<f64>),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("Gram matrix is singular (det = {0})")]
    SingularGram(f64),

    #[error("{failed} of {total} realizations failed, more than the 5% allowed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("degenerate field: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
