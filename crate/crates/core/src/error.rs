use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DemmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DemmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid sparsity pattern {n}:{m} (need 1 <= n <= m)")]
    InvalidPattern { n: usize, m: usize },

    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("column index {col} out of range (limit {limit})")]
    ColumnOutOfRange { col: usize, limit: usize },

    #[error("tile of {rows}x{cols} does not fit engine memory {depth}x{width}")]
    TileTooLarge {
        rows: usize,
        cols: usize,
        depth: usize,
        width: usize,
    },

    #[error("engine has no preloaded tile")]
    NotPreloaded,

    #[error("preload requested while the pipeline is busy")]
    PreloadDuringCompute,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
