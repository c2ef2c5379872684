use std::path::PathBuf;

/// Errors raised by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("elevation {elevation} m is not on the grid")]
    OffGrid { elevation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite value in layer {layer}: {what}")]
    NonFinite { layer: usize, what: String },

    #[error("solver diverged at iteration {iteration}: objective rose from {before} to {after}")]
    Divergence {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status: 1 for usage/config problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_)
            | Error::NonFinite { .. }
            | Error::Divergence { .. }
            | Error::DegenerateScene(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
