use std::path::{Path, PathBuf};

/// Errors surfaced by the runner, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: diffsc_core::Error,
    },
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        AppError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn numeric(context: impl Into<String>, source: diffsc_core::Error) -> Self {
        AppError::Numeric {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } => 2,
            AppError::Io { .. } | AppError::Format { .. } => 3,
            AppError::Numeric { .. } => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            AppError::Config { .. } => "config",
            AppError::Io { .. } => "io",
            AppError::Format { .. } => "format",
            AppError::Numeric { .. } => "numeric",
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T, AppError>;
}

impl<T> Context<T> for Result<T, diffsc_core::Error> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T, AppError> {
        self.map_err(|e| AppError::numeric(ctx(), e))
    }
}
