use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("city table {}: {message}", path.display())]
    CityTable { path: PathBuf, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("event log {}: {source}", path.display())]
    Log { path: PathBuf, source: std::io::Error },
}

impl StartupError {
    /// Process exit status for a failed start.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
