use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space description: {0}")]
    InvalidSpec(String),

    #[error("nodes {0} and {1} are distinct but at distance zero")]
    DuplicatePoints(usize, usize),

    #[error("distance matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),

    #[error("unknown node {node} (space has {len} nodes)")]
    UnknownNode { node: usize, len: usize },

    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),

    #[error("ball B({node}, {radius}) has zero measure")]
    ZeroBallMeasure { node: usize, radius: f64 },

    #[error("non-finite value at node {0}")]
    NonFinite(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("exponent {value} at node {node} outside (1, inf)")]
    ExponentRange { node: usize, value: f64 },

    #[error("dominating function rejected: {0}")]
    InvalidLambda(String),

    #[error("kernel rejected: {0}")]
    InvalidKernel(String),

    #[error("glued space rejected: {0}")]
    InvalidGlue(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the caller's input rather than by a failure inside the library.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
