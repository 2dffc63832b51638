//! CLI errors, their exit codes and their JSON form.

use mfvi_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or invalid configuration entry.
    #[error("{key}: {message}")]
    Config { key: String, message: String },

    /// A library error, tagged with the configuration key it traces back to.
    #[error("{}{source}", key.as_ref().map(|k| format!("{k}: ")).unwrap_or_default())]
    Core { key: Option<String>, source: CoreError },

    #[error("i/o error: {0}")]
    Io(String),

    /// One or more oracle checks failed.
    #[error("oracle check failed: {0}")]
    CheckFailed(String),
}

impl From<CoreError> for CliError {
    fn from(source: CoreError) -> Self {
        Self::Core { key: None, source }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Attaches a configuration key to library errors.
pub trait AtKey<T> {
    fn at(self, key: &str) -> Result<T, CliError>;
}

impl<T> AtKey<T> for Result<T, CoreError> {
    fn at(self, key: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { key: Some(key.to_string()), source })
    }
}

impl CliError {
    /// 2 for non-convergence, 3 for invalid parameters or inputs, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 3,
            Self::Core { source, .. } => match source {
                CoreError::Convergence { .. } => 2,
                CoreError::Param(_)
                | CoreError::Domain(_)
                | CoreError::Shape { .. }
                | CoreError::Input(_)
                | CoreError::Monotonicity { .. } => 3,
                CoreError::Eval(_) | CoreError::Assembly(_) | CoreError::Io(_) => 1,
            },
            Self::Io(_) | Self::CheckFailed(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Core { source, .. } => match source {
                CoreError::Eval(_) => "eval",
                CoreError::Convergence { .. } => "convergence",
                CoreError::Param(_) => "param",
                CoreError::Domain(_) => "domain",
                CoreError::Shape { .. } => "shape",
                CoreError::Input(_) => "input",
                CoreError::Assembly(_) => "assembly",
                CoreError::Monotonicity { .. } => "monotonicity",
                CoreError::Io(_) => "io",
            },
            Self::Io(_) => "io",
            Self::CheckFailed(_) => "check_failed",
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            Self::Config { key, .. } => Some(key),
            Self::Core { key, .. } => key.as_deref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let message = match self {
            Self::Config { message, .. } => message.clone(),
            Self::Core { source, .. } => source.to_string(),
            other => other.to_string(),
        };
        json!({
            "error": {
                "kind": self.kind(),
                "key": self.key(),
                "message": message,
                "exit_code": self.exit_code(),
            }
        })
    }
}
