use std::path::PathBuf;

/// Errors raised by the library. Each variant maps onto one of the
/// process exit codes used by the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("direction is undefined at the origin")]
    UndefinedDirection,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 ok, 1 usage, 2 data, 3 numeric, 4 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } | Error::Usage(_) | Error::UndefinedDirection => 1,
            Error::Data(_) | Error::NonFinite(_) => 2,
            Error::Numeric(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
