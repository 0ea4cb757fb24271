use serde::Serialize;
use thiserror::Error;

/// Failures of a CLI run, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit code 2).
    #[error("configuration error{}: {message}", key.as_deref().map(|k| format!(" at '{k}'")).unwrap_or_default())]
    Config { key: Option<String>, message: String },

    /// A solver or evaluation failed (exit code 1).
    #[error("numerical failure: {0}")]
    Numerical(#[from] cwsbie::Error),

    /// Artifacts could not be written (exit code 1).
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// Validation ran but at least one check failed (exit code 1).
    #[error("{failed} of {total} validation checks failed")]
    ValidationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(key: impl Into<Option<String>>, message: impl Into<String>) -> Self {
        Self::Config { key: key.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            _ => 1,
        }
    }

    /// Machine-readable description printed on failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            key: Option<&'a str>,
            message: String,
            exit_code: i32,
        }
        let (kind, key) = match self {
            Self::Config { key, .. } => ("config", key.as_deref()),
            Self::Numerical(_) => ("numerical", None),
            Self::Io { .. } => ("io", None),
            Self::ValidationFailed { .. } => ("validation", None),
        };
        let body = Body { kind, key, message: self.to_string(), exit_code: self.exit_code() };
        serde_json::json!({ "error": body }).to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;
