use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hpcausal_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {artifact} at {}; run `hpcausal {command}` first", path.display())]
    Missing {
        artifact: &'static str,
        path: PathBuf,
        command: &'static str,
    },
    #[error("stale {artifact} at {}: built with config hash {found}, current config hashes to {expected}; rerun `hpcausal {command}`", path.display())]
    Stale {
        artifact: &'static str,
        path: PathBuf,
        expected: String,
        found: String,
        command: &'static str,
    },
    #[error("{} already exists; pass --force to replace it", .0.display())]
    Exists(PathBuf),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// 2 configuration, 3 data / estimation / IO, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use hpcausal_core::Error as C;
        match self {
            Error::Core(C::Config(_)) | Error::Config(_) | Error::Exists(_) => 2,
            Error::Core(C::Numerical(_)) => 4,
            _ => 3,
        }
    }
}
