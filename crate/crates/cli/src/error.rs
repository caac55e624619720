use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] carbon_ppi::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 1 for I/O trouble.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::Model(e) if e.is_validation() => 2,
            CliError::Model(_) => 3,
            CliError::Write { .. } => 1,
        }
    }
}
