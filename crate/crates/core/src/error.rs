use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pixel index ({col}, {row}) outside the {size}x{size} logical grid")]
    Index { col: i64, row: i64, size: usize },

    #[error("no calibration entry for pixel ({col}, {row})")]
    CalibrationMissing { col: u16, row: u16 },

    #[error("deposit at ({x_mm:.4}, {y_mm:.4}) mm lies outside the active area")]
    OutOfActiveArea { x_mm: f64, y_mm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: toa {toa_ns} ns arrives after {last_ns} ns was already emitted (reorder buffer {buffer})")]
    Order {
        path: PathBuf,
        line: u64,
        toa_ns: f64,
        last_ns: f64,
        buffer: usize,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        // csv wraps plain io failures; surface them as such so callers can
        // tell a missing file from a malformed one.
        let path = path.into();
        if source.is_io_error() {
            match source.into_kind() {
                csv::ErrorKind::Io(e) => return Error::Io { path, source: e },
                _ => unreachable!(),
            }
        }
        let line = source.position().map(|p| p.line());
        match line {
            Some(line) => Error::Parse {
                path,
                line,
                message: source.to_string(),
            },
            None => Error::Csv { path, source },
        }
    }
}
