use std::path::PathBuf;

use crownscale_core::ErrorKind;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Schema or semantic config violation; `field` is a dotted path.
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("missing upstream artifact `{}`; run `{producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] crownscale_core::Error),

    #[error(transparent)]
    Nn(#[from] crownscale_nn::Error),

    #[error("I/O error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Config { .. } | CliError::Validation(_) => ErrorKind::Validation,
            CliError::MissingArtifact { .. } => ErrorKind::MissingDependency,
            CliError::Core(e) => e.kind(),
            CliError::Nn(e) => e.kind(),
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorKind::MissingDependency
            }
            CliError::Io { .. } | CliError::Runtime(_) => ErrorKind::Runtime,
        }
    }

    /// Process exit code: 2 config/validation, 3 missing dependency, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::MissingDependency => 3,
            ErrorKind::Runtime => 4,
        }
    }
}
