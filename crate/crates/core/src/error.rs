use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or a record that violates its invariants.
    Validation,
    /// A required input file or upstream artifact is missing.
    MissingDependency,
    /// Everything else: I/O failures, undecodable data, numeric trouble.
    Runtime,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid record for tree `{tree_id}`: field `{field}` {reason}")]
    Validation {
        tree_id: String,
        field: &'static str,
        reason: String,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("unsupported raster format: {0}")]
    Format(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no usable acquisition dates for tree `{0}`")]
    EmptySeries(String),

    #[error("cannot assign splits: {0}")]
    EmptyAssignment(String),

    #[error("missing input `{}`", .0.display())]
    MissingInput(PathBuf),

    #[error("I/O error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("TIFF error in `{}`: {source}", path.display())]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("image error in `{}`: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("CSV error in `{}`: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Consistency(_)
            | Error::EmptyAssignment(_) => ErrorKind::Validation,
            Error::MissingInput(_) => ErrorKind::MissingDependency,
            Error::Format(_)
            | Error::DegenerateGeometry(_)
            | Error::EmptySeries(_)
            | Error::Io { .. }
            | Error::Tiff { .. }
            | Error::Image { .. }
            | Error::Csv { .. } => ErrorKind::Runtime,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn validation(
        tree_id: impl Into<String>,
        field: &'static str,
        reason: impl Into<String>,
    ) -> Self {
        Error::Validation {
            tree_id: tree_id.into(),
            field,
            reason: reason.into(),
        }
    }
}
