use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain box: {0}")]
    InvalidBox(String),

    #[error("point {index} lies outside the domain box (coordinate {coord}, value {value})")]
    PointOutsideBox {
        index: usize,
        coord: usize,
        value: f64,
    },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid constants profile: {0}")]
    InvalidProfile(String),

    #[error("label must be 0 or 1, got {0}")]
    NonBinaryLabel(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "solver did not reach tolerance after {iters} iterations (gradient norm {grad_norm:e})"
    )]
    NotConverged {
        iters: usize,
        grad_norm: f64,
        theta: Vec<f64>,
    },

    #[error("combined support {size} exceeds the exact-transport cap {cap}; subsample the distributions first")]
    SupportCapExceeded { size: usize, cap: usize },

    #[error("transport solver failed: {0}")]
    Transport(String),

    #[error("quadrature did not converge (partial value {partial})")]
    Quadrature { partial: f64 },

    #[error("enumeration budget exceeded: {candidates} candidates > {budget}")]
    BudgetExceeded { candidates: u64, budget: u64 },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "invalid_box",
            Error::PointOutsideBox { .. } => "point_outside_box",
            Error::InvalidWeights(_) => "invalid_weights",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidProfile(_) => "invalid_profile",
            Error::NonBinaryLabel(_) => "non_binary_label",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotConverged { .. } => "not_converged",
            Error::SupportCapExceeded { .. } => "support_cap_exceeded",
            Error::Transport(_) => "transport",
            Error::Quadrature { .. } => "quadrature",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::Round { .. } => "round",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
