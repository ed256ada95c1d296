use hefuzz_core::protocol::ProtocolError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{failed} of {total} input lines were rejected")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    /// 0 success, 1 other failures, 2 partial input errors, 3 protocol
    /// failure, 4 config error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Partial { .. } => 2,
            CliError::Protocol(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}
