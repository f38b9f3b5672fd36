use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Model(#[from] twoscale::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for bad input or configuration, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Model(e) if e.is_numerical() => 3,
            CliError::Model(_) => 2,
        }
    }
}

/// Classifies a CSV failure on `path` as I/O or schema.
pub fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map(|p| format!(" (record {})", p.record())).unwrap_or_default();
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::io(path, source),
            _ => unreachable!("checked by is_io_error"),
        }
    } else {
        CliError::Schema(format!("{}{row}: {e}", path.display()))
    }
}
