use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AncError>;

#[derive(Debug, Error)]
pub enum AncError {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kalman gain undefined: innovation variance is {denominator} (q = {q})")]
    SingularGain { denominator: f64, q: f64 },

    #[error("control filter diverged: max |w| = {max_abs} exceeds bound {bound}")]
    Divergence { max_abs: f64, bound: f64 },

    #[error("empty signal")]
    EmptySignal,

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl AncError {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            AncError::Io { .. }
                | AncError::Wav {
                    source: hound::Error::IoError(_),
                    ..
                }
        )
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        AncError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AncError::NonFinite { what, value })
    }
}
