use thiserror::Error;

/// Errors produced by the discretization, fiber analysis, estimators and
/// solver pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field length {field} does not match grid interior size {grid}")]
    GridMismatch { field: usize, grid: usize },

    #[error("value out of range: {0}")]
    RangeError(String),

    /// The reduced map is monotone increasing; no interior maximizer exists.
    #[error("no maximizer: {0}")]
    NoMaximizer(String),

    /// The Nehari root equation has no solution on the requested side.
    #[error("no root: {0}")]
    NoRoot(String),

    #[error("projection onto the Nehari branch failed: {0}")]
    ProjectionFailure(String),

    #[error("constant estimation failed: {0}")]
    EstimationFailure(String),

    #[error("construction of the starting field failed: {0}")]
    ConstructionFailure(String),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    /// A theorem hypothesis does not hold for the given parameters; the
    /// pipeline refuses to run. Carries the failing gate summary.
    #[error("gate refused: {0}")]
    GateRefused(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
