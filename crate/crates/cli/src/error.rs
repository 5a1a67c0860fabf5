use std::path::PathBuf;

use thiserror::Error;
use trajnet::dataset::DatasetError;
use trajnet::dynsys::DynsysError;
use trajnet::evaluation::EvalError;
use trajnet::integrator::IntegrationError;
use trajnet::neuralnet::NetError;
use trajnet::training::TrainError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("unknown system `{name}` (known: {known})")]
    UnknownSystem { name: String, known: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: NetError,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    System(#[from] DynsysError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
}

impl CliError {
    /// Stable short name used in the `error[kind]: message` line.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Config(_) | Self::UnknownSystem { .. } => "config",
            Self::Mismatch(_) => "mismatch",
            Self::Usage(_) => "usage",
            Self::Dataset { .. } => "dataset",
            Self::Model { .. } | Self::Net(_) => "model",
            Self::System(_) | Self::Integration(_) => "integration",
            Self::Train(_) => "training",
            Self::Eval { .. } => "evaluation",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
