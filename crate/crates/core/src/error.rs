use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("diversity violated between sample pairs {pairs:?}")]
    DiversityViolation { pairs: Vec<(usize, usize)> },

    #[error("need at least 2 noisy samples, got {0}")]
    TooFewSamples(usize),

    /// The target count per sample is not a whole number greater than one.
    #[error("target rearrangement constraint violated: {0}")]
    Rearrangement(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::InvalidInput(_) | Error::Internal(_) | Error::Io { .. } | Error::Parse { .. } => 3,
            Error::DiversityViolation { .. } | Error::TooFewSamples(_) | Error::Rearrangement(_) => 4,
            Error::Divergence { .. } => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Rebinds a parse error to a concrete file name.
    pub(crate) fn with_origin(self, origin: &str) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                origin: origin.to_string(),
                line,
                message,
            },
            other => other,
        }
    }
}
