use std::path::Path;

use rayalign_core::Error as CoreError;
use thiserror::Error;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or input files. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// The scene graph does not form one connected component. Exit code 3.
    #[error("{0}")]
    Disconnected(String),
    /// Optimization produced a non-finite objective. Exit code 4.
    #[error("{0}")]
    NonFinite(String),
    /// Anything else, including failed writes. Exit code 1.
    #[error("{0}")]
    Failed(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Disconnected(_) => 3,
            CliError::NonFinite(_) => 4,
            CliError::Failed(_) => 1,
        }
    }

    pub(crate) fn read(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub(crate) fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Failed(format!("{}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Disconnected(_) | CoreError::IsolatedView(_) | CoreError::EmptyGraph => {
                CliError::Disconnected(msg)
            }
            CoreError::NonFinite { .. } => CliError::NonFinite(msg),
            CoreError::InvalidConfig(_)
            | CoreError::InvalidCamera(_)
            | CoreError::InvalidGraph(_)
            | CoreError::NotReciprocal(_)
            | CoreError::NotARotation(_)
            | CoreError::DimensionMismatch(_)
            | CoreError::RayEscapes { .. } => CliError::Input(msg),
            _ => CliError::Failed(msg),
        }
    }
}
