use std::path::Path;

/// Command failures, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or missing inputs; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit status 1.
    #[error("{0}")]
    Runtime(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<uwimg_core::Error> for CliError {
    fn from(e: uwimg_core::Error) -> Self {
        match e {
            uwimg_core::Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
