use thiserror::Error;

pub type Result<T> = std::result::Result<T, FirnError>;

#[derive(Debug, Error)]
pub enum FirnError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("singular system matrix: zero pivot at row {pivot}{}", diagnostic.as_deref().map(|d| format!("; {d}")).unwrap_or_default())]
    Singular {
        pivot: usize,
        diagnostic: Option<String>,
    },

    #[error("non-finite value in solution at time step {step}")]
    NonFinite { step: usize },

    #[error("meshes share no interior nodes")]
    NoCommonNodes,

    #[error("line search: {0}")]
    LineSearch(String),

    #[error("objective evaluation failed at iteration {iteration}: {source}")]
    Optimizer {
        iteration: usize,
        iterate: Vec<f64>,
        #[source]
        source: Box<FirnError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
