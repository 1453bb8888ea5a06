use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid board dimensions {width}x{height} with {num_colors} colors")]
    Dimension {
        width: usize,
        height: usize,
        num_colors: u8,
    },

    #[error("invalid board: {0}")]
    InvalidBoard(String),

    #[error("illegal move at row {row}, col {col}")]
    IllegalMove { row: usize, col: usize },

    #[error("contract violation: {0}")]
    Contract(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("tensor shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error("score mismatch on replay: recorded {recorded}, replayed {replayed}")]
    ReplayMismatch { recorded: i64, replayed: i64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
