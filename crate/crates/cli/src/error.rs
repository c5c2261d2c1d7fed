//! Exit-code mapping.

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] kerdisc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kerdisc::Error as E;
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io(_) => EXIT_IO,
            Self::Core(e) => match e {
                E::InvalidArgument(_) | E::Unsupported(_) => EXIT_USAGE,
                E::Parse { .. } | E::Io(_) => EXIT_IO,
                E::Range(_) | E::Numerical(_) | E::Diverged { .. } => EXIT_NUMERICAL,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}
