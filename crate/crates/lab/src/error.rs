use std::path::{Path, PathBuf};

/// Errors of the file-backed pipeline. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    /// An upstream artifact is missing; `stage` names the command that makes it.
    #[error("missing {what} at {}: run `{stage}` first", path.display())]
    Dependency { what: String, stage: &'static str, path: PathBuf },
    #[error("{}:{line}:{column}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Bench(String),
    #[error(transparent)]
    Core(#[from] stagedistil_core::Error),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Config(_) => 1,
            LabError::Dependency { .. } => 2,
            LabError::Core(stagedistil_core::Error::Config(_)) => 1,
            _ => 3,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
        move |source| LabError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> LabError {
        LabError::Format { path: path.to_path_buf(), msg: msg.into() }
    }
}
