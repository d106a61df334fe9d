use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SfsError>;

#[derive(Debug, Error)]
pub enum SfsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown surface kind `{0}` (expected one of: {1})")]
    UnknownKind(String, String),

    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("pixel with non-positive brightness at ({row}, {col}); shadowed input is not supported")]
    NonPositiveBrightness { row: usize, col: usize },

    #[error("no singular point found: no pixel reaches the singular brightness threshold")]
    NoSingularPoint,

    #[error("degenerate image: a single bright component covers {fraction:.0}% of the pixels")]
    DegenerateImage { fraction: f64 },

    #[error("target ({row}, {col}) is unreachable from the source")]
    Unreachable { row: usize, col: usize },

    #[error("path descent stalled at ({row}, {col}) before reaching the source")]
    DescentStall { row: usize, col: usize },

    #[error("infeasible configuration: cycle residual {residual:.4} exceeds tolerance {tol:.4}")]
    InfeasibleConfiguration { residual: f64, tol: f64 },

    #[error("configuration has {got} signs but the graph has {expected} edges")]
    ConfigurationSize { expected: usize, got: usize },

    #[error("unresolved ambiguity: {0}")]
    UnresolvedAmbiguity(String),

    #[error("inconsistent anchors: {0}")]
    InconsistentAnchors(String),

    #[error("no local-maximum source for reconstruction")]
    NoMaximumSource,
}

impl SfsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SfsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        SfsError::Format {
            format,
            msg: msg.into(),
        }
    }
}
