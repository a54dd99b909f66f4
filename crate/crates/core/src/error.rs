use std::path::PathBuf;

/// Errors raised while loading, generating, perturbing or scoring benchmark data.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("model `{model}` has no prediction for {} instance(s): {}", .ids.len(), .ids.join(", "))]
    MissingPrediction { model: String, ids: Vec<String> },

    #[error("no predictions from model `{model}` for subsampling trial {trial}")]
    MissingTrial { model: String, trial: String },

    #[error("prediction refers to unknown instance id `{0}`")]
    UnknownInstance(String),

    #[error("integrity check failed for {path}: manifest hash {expected}, file hash {found}")]
    Integrity {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for missing predictions, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingPrediction { .. } | Error::MissingTrial { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
