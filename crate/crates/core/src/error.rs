use std::path::PathBuf;

/// Errors produced by the analysis pipeline.
///
/// Variants map onto the CLI exit-code contract through [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for factor `{factor}` ({levels} levels)")]
    Index {
        factor: String,
        index: usize,
        levels: usize,
    },

    #[error("unknown factor `{0}`")]
    Key(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("metadata error: {0}")]
    Meta(String),

    #[error("format error in `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("eigen-solver did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn format(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            field,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/parameter, 3 degenerate data, 4 I/O or format.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Index { .. }
            | Error::Key(_)
            | Error::Param(_)
            | Error::Shape(_)
            | Error::Meta(_) => 2,
            Error::Degenerate(_) | Error::Convergence { .. } => 3,
            Error::Format { .. } | Error::Io { .. } => 4,
        }
    }

    /// The offending field for format errors.
    pub fn format_field(&self) -> Option<&'static str> {
        match self {
            Error::Format { field, .. } => Some(field),
            _ => None,
        }
    }
}
