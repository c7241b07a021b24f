use std::path::PathBuf;

use anc_core::AncError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] AncError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl SimError {
    /// Process exit code: 2 configuration or input data, 3 divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Core(AncError::Divergence { .. }) => 3,
            SimError::Core(e) if e.is_io() => 4,
            SimError::Core(_) => 2,
            SimError::Io { .. } | SimError::Csv { .. } => 4,
        }
    }
}
