use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("band {band} is degenerate near k = {k}; no smooth real gauge exists")]
    DegenerateBand { band: usize, k: f64 },

    #[error("{axis} = {value} lies outside the tabulated range [{min}, {max}]")]
    OutOfTableRange {
        axis: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("Krylov step at t = {t} misses tolerance {tol:e} with {dim} vectors (estimate {estimate:e})")]
    KrylovTolerance {
        t: f64,
        tol: f64,
        dim: usize,
        estimate: f64,
    },

    #[error("Lanczos did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Fock space dimension {dim} exceeds the guard of {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("at omega = {omega} E_R/hbar: {source}")]
    AtFrequency {
        omega: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
