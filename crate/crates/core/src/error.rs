use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("jet too short: order {have} given, order {need} required")]
    Truncation { have: usize, need: usize },
    #[error("quadrature failed to converge (achieved error estimate {estimate:.3e})")]
    Quadrature { estimate: f64 },
    #[error("series diverges: {0}")]
    SeriesDivergence(String),
    #[error("diagnostics: {0}")]
    Diagnostics(String),
    #[error("fixed-point iteration diverged (residual ratio {ratio:.3})")]
    SmallnessViolated { ratio: f64 },
    #[error("tolerance {tol:.1e} unreachable at this resolution (stalled at {reached:.3e})")]
    Resolution { tol: f64, reached: f64 },
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
