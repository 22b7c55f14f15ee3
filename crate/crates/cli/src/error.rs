use std::fmt;

use evoir_core::{ErrorKind, VoiError};

/// Failure of a command, classified by the exit status it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self {
            CliError::Usage(_) => "usage error",
            CliError::Data(_) => "data error",
            CliError::Numerical(_) => "numerical failure",
        };
        write!(f, "{kind}: {}", self.message())
    }
}

impl std::error::Error for CliError {}

impl From<VoiError> for CliError {
    fn from(e: VoiError) -> Self {
        let msg = e.to_string();
        match e.kind() {
            ErrorKind::Usage => CliError::Usage(msg),
            ErrorKind::Data => CliError::Data(msg),
            ErrorKind::Numerical => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
