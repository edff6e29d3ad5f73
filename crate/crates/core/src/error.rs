use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Lamé constants or viscosity outside the admissible range.
    #[error("invalid elastic parameters: {0}")]
    InvalidParams(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Operation is undefined at the zero frequency.
    #[error("{0} is undefined at the zero mode xi = 0")]
    ZeroMode(&'static str),

    #[error("near-singular factor 1 - exp(sigma T) = {value:e} at sigma = {sigma}")]
    NearSingular { sigma: Complex64, value: f64 },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("non-finite multiplier value at mode {mode:?}")]
    NonFiniteMultiplier { mode: [i64; 3] },

    /// Non-finite values or blow-up; `at` names the iterate or time stamp.
    #[error("divergence detected at {at}: {detail}")]
    Divergence { at: String, detail: String },

    #[error("Picard iteration did not converge in {iterations} iterations (last residual {last:e})")]
    NonConvergence { iterations: usize, last: f64, history: Vec<f64> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::Config(_) => "config",
            Error::ZeroMode(_) => "zero_mode",
            Error::NearSingular { .. } => "near_singular",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::GridMismatch => "grid_mismatch",
            Error::NonFiniteMultiplier { .. } => "non_finite_multiplier",
            Error::Divergence { .. } => "divergence",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Domain(_) => "domain",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::UnknownScenario(_) => "unknown_scenario",
        }
    }

    /// Process exit status: 2 for an unknown scenario, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownScenario(_) => 2,
            _ => 1,
        }
    }
}
