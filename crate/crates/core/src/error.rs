use std::path::PathBuf;

/// Errors produced by every stage of the pipeline.
///
/// Variants are grouped by the exit code the CLI maps them to; see
/// [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid data at record {index}: {message}")]
    Data { index: usize, message: String },

    #[error("scene contains no gaussians")]
    EmptyScene,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 I/O, 2 format, 3 dimension/contract, 4 bad arguments.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Format(_) | Error::Data { .. } | Error::EmptyScene => 2,
            Error::Dimension(_) | Error::Contract(_) => 3,
            Error::InvalidArgument(_) => 4,
        }
    }
}
