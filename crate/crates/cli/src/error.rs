use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cache entry {0} failed checksum verification; delete it or rerun with --force")]
    Checksum(PathBuf),

    #[error("cache entry {path} is unreadable: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    #[error("{count} work unit(s) failed after one retry: {details}")]
    Workers { count: usize, details: String },

    #[error(transparent)]
    Core(#[from] locsense::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
