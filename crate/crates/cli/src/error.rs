use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 4,
        }
    }

    /// Prefixes the message with a tensor name unless it already has it.
    pub fn for_tensor(self, name: &str) -> Self {
        let tag = format!("tensor `{name}`");
        let prefix = |m: String| if m.contains(&tag) { m } else { format!("{tag}: {m}") };
        match self {
            Self::Validation(m) => Self::Validation(prefix(m)),
            Self::Numerical(m) => Self::Numerical(prefix(m)),
            io => io,
        }
    }
}

impl From<sslc::Error> for CliError {
    fn from(e: sslc::Error) -> Self {
        use sslc::Error as E;
        match e {
            E::SingularProjection { .. } | E::NumericalFailure { .. } => Self::Numerical(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Validation(format!("malformed manifest: {e}"))
    }
}
