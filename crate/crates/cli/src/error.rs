use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: tmsmooth::Error },

    #[error(transparent)]
    Core(#[from] tmsmooth::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use tmsmooth::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Read { .. } | CliError::Write { .. } | CliError::Input { .. } => 3,
            CliError::Core(e) => match e {
                E::DegenerateScale(_) => 4,
                E::Io(_) | E::Parse { .. } | E::Csv(_) | E::Json(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
