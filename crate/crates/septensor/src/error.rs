use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure categories surfaced by
/// the public operations so callers (and the CLI exit-code mapping) can match
/// on the kind without string inspection.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coordinate {x} outside domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("moment system ill-conditioned (estimate {0:.3e})")]
    Conditioning(f64),

    #[error("assembly error in element {element}: {message}")]
    Assembly { element: usize, message: String },

    #[error("numerically singular matrix at row {row}")]
    SingularMatrix { row: usize },

    #[error("solver error in dimension {dim} at mode {mode}: {message}")]
    Solver {
        dim: usize,
        mode: usize,
        message: String,
    },

    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("field container format error: {0}")]
    Format(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("indexed errors: {}", .0.iter().map(|(i, e)| format!("[{i}] {e}")).collect::<Vec<_>>().join("; "))]
    Indexed(Vec<(usize, Box<Error>)>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
