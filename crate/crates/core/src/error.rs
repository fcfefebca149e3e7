use thiserror::Error;

/// Errors raised across the pricing, training and hedging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("correlation matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("diffusion matrix is singular at the given state ({0})")]
    SingularDiffusion(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    Domain(String),

    #[error("exchange spread volatility {0:.3e} is below the degeneracy tolerance")]
    DegenerateSpread(f64),

    #[error("non-finite loss {loss} at time step {step} ({phase})")]
    NonFiniteLoss { step: usize, phase: &'static str, loss: f64 },

    #[error("instrument {0} cannot be priced at the requested state")]
    MissingQuote(usize),

    #[error("least squares solver did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("sample of size {got} is too small (need at least {need})")]
    InsufficientSample { got: usize, need: usize },

    #[error("sample is degenerate (zero variance)")]
    DegenerateSample,

    #[error("portfolio price normalizer {0:.3e} is not positive")]
    ZeroNormalizer(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("artifact is incompatible: {0}")]
    Incompatible(String),

    #[error("no report files found in {0}")]
    NoReports(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical origin, as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularDiffusion(_)
                | Error::DegenerateSpread(_)
                | Error::NonFiniteLoss { .. }
                | Error::NoConvergence { .. }
                | Error::DegenerateSample
                | Error::ZeroNormalizer(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
