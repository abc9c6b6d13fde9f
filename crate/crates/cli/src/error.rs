use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("no admissible configuration after {attempts} samples ({placed} of {wanted} atoms placed)")]
    RetryExhausted { attempts: usize, placed: usize, wanted: usize },
    #[error(transparent)]
    Core(#[from] sphere_superres::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
