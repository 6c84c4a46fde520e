use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures surfaced by the command-line pipeline.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mainstage_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, message: impl ToString) -> Self {
        AppError::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// 1 for usage and configuration mistakes, 3 for non-finite arithmetic,
    /// 2 for everything that is wrong with the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Core(mainstage_core::Error::Config(_)) => 1,
            AppError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
