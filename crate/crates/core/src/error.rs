use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("base point has {available} digits left, {needed} required")]
    CapacityExhausted { needed: usize, available: usize },

    #[error("root not bracketed on [{lo}, {hi}] for target {target}")]
    RootNotBracketed { lo: f64, hi: f64, target: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("function is not positive at node {node} (value {value})")]
    NonPositive { node: usize, value: f64 },

    #[error("function is outside the cone: seminorm {seminorm} > K * inf = {bound}")]
    ConeViolation { seminorm: f64, bound: f64 },

    #[error("nonpositive denominator in Hilbert distance triple scan")]
    NonPositiveDenominator,

    #[error("image left the cone: ratio {ratio} exceeds {limit}")]
    ConeEscape { ratio: f64, limit: f64 },

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no good words for the given parameters")]
    EmptyGoodSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CapacityExhausted { .. } => "capacity_exhausted",
            Error::RootNotBracketed { .. } => "root_not_bracketed",
            Error::HypothesisViolated(_) => "hypothesis_violated",
            Error::NonPositive { .. } => "nonpositive_function",
            Error::ConeViolation { .. } => "cone_violation",
            Error::NonPositiveDenominator => "nonpositive_denominator",
            Error::ConeEscape { .. } => "cone_escape",
            Error::NoConvergence { .. } => "no_convergence",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::EmptyGoodSet => "empty_good_set",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
