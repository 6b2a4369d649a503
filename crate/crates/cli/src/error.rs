use std::path::PathBuf;

use vamzls_core::Error as CoreError;

/// Exit status for user mistakes: bad flags, unreadable or malformed input.
pub const EXIT_USER: u8 = 2;
/// Exit status for numerical breakdown or a fit that did not converge.
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: line {line}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("model: {0}")]
    Model(CoreError),

    #[error("numerical failure: {0}")]
    Numerical(CoreError),

    #[error("fit did not converge after {0} iterations")]
    NotConverged(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) | CliError::NotConverged(_) => EXIT_NUMERICAL,
            _ => EXIT_USER,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SingularPrecision(_)
            | CoreError::NotPositiveDefinite(_)
            | CoreError::NonFinite(_)
            | CoreError::NotConverged(_)
            | CoreError::DegenerateTest(_) => CliError::Numerical(e),
            _ => CliError::Model(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
