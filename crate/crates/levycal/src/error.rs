use std::path::PathBuf;

use levycal_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: cannot parse `{content}` as a number")]
    Parse {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("{0}: no samples found")]
    EmptyFile(PathBuf),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 for usage, config and input problems, 2 when
    /// the numerics refuse or fail.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(
                CoreError::StepTooLarge { .. } | CoreError::SingularSystem { .. } | CoreError::LineSearchFailed { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
