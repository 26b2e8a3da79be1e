use std::path::PathBuf;

use crate::ini::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// An input file that does not fit the configured run.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] wavecip_core::Error),
    #[error("gradient check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 1 check failure, 2 config or input error, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        use wavecip_core::Error as E;
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) | CliError::Input { .. } | CliError::Io { .. } => 2,
            CliError::Solver(e) => match e {
                E::NonFinite { .. } | E::CflViolation { .. } | E::ZeroDenominator(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
