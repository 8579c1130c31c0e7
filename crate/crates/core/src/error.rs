use std::path::PathBuf;

/// Errors reported by matrix construction, solver setup, and the file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("invalid stencil: {0}")]
    InvalidStencil(String),

    #[error("dense expansion refused: n = {n} exceeds cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("singular preconditioner: zero diagonal entry at row {row}")]
    SingularPreconditioner { row: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("problem generation failed: {0}")]
    Generation(String),

    #[error("cfl limit exceeded at step {step}: cfl = {cfl}")]
    CflViolation { step: usize, cfl: f64 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("malformed {what} at {path}:{line}: {msg}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(what: &'static str, path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            what,
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
