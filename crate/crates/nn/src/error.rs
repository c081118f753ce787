use std::path::PathBuf;

use crownscale_core::ErrorKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] crownscale_core::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric degeneracy: {0}")]
    Numeric(String),

    #[error("no pairable trees: {0}")]
    EmptyPairing(String),

    #[error("backbone `{backbone}` needs pretrained weights; {hint}")]
    MissingWeights { backbone: String, hint: String },

    #[error("missing input `{}`", .0.display())]
    MissingInput(PathBuf),

    #[error("I/O error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed `{}`: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Core(e) => e.kind(),
            Error::Config(_) | Error::Consistency(_) | Error::Shape(_) | Error::EmptyPairing(_) => {
                ErrorKind::Validation
            }
            Error::MissingWeights { .. } | Error::MissingInput(_) => ErrorKind::MissingDependency,
            Error::Tensor(_) | Error::Numeric(_) | Error::Io { .. } | Error::Format { .. } => ErrorKind::Runtime,
        }
    }
}
