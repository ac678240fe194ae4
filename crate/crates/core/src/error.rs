use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid reward: {0}")]
    InvalidReward(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("norm bound too small: ||theta*|| = {norm} exceeds B = {bound}")]
    NormBoundTooSmall { norm: f64, bound: f64 },
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("degenerate feature rows for state {state}, action {action}")]
    DegenerateFeatures { state: usize, action: usize },
    #[error("constraint piece is infeasible: {0}")]
    InfeasiblePiece(String),
    #[error("inner solver did not converge after {iterations} iterations (gap {gap:e})")]
    InnerNotConverged { iterations: usize, gap: f64 },
    #[error("projection did not converge after {sweeps} sweeps (residual {residual:e})")]
    ProjectionNotConverged { sweeps: usize, residual: f64 },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
