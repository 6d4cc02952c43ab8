use std::io;
use std::path::{Path, PathBuf};

use sfatnet_core::dsp::DspError;
use sfatnet_core::explain::ExplainError;
use sfatnet_core::metrics::MetricsError;
use sfatnet_core::model::ModelError;
use sfatnet_core::tensor::CheckpointError;
use sfatnet_core::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
    #[error("need at least {needed} entries to split, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("{path}: {source}")]
    Audio { path: PathBuf, source: DspError },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status for an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            Error::Usage(_) | Error::Config { .. } => ExitStatus::Usage,
            Error::Train(TrainError::NonFinite { .. }) => ExitStatus::Numerical,
            Error::Train(TrainError::Config(_)) | Error::Model(ModelError::Config(_)) => ExitStatus::Usage,
            _ => ExitStatus::Data,
        }
    }
}
