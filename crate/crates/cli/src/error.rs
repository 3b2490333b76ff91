use std::path::{Path, PathBuf};

use thiserror::Error;
use xbnet::data::DataError;
use xbnet::gbdt::GbtError;
use xbnet::metrics::MetricsError;
use xbnet::network::NetworkError;
use xbnet::optimizer::TrainError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const IO: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("artifact format_version {found} is not supported (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("invalid artifact: {0}")]
    Artifact(String),
    #[error("invalid run: {0}")]
    Invalid(String),
    #[error("benchmark failed: {0}")]
    BenchmarkFailed(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tree(#[from] GbtError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        let message = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::io(path, source),
            _ => CliError::Config {
                path: path.to_path_buf(),
                message,
            },
        }
    }

    /// 1 for validation and benchmark failures, 2 for I/O and schema
    /// problems, 3 for numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. }
            | CliError::Config { .. }
            | CliError::Version { .. }
            | CliError::Artifact(_) => exit::IO,
            CliError::Data(
                DataError::Io { .. }
                | DataError::Csv(_)
                | DataError::Schema(_)
                | DataError::MissingLabelColumn(_)
                | DataError::Ragged { .. }
                | DataError::Parse { .. }
                | DataError::MissingLabel { .. }
                | DataError::UnknownClass(_)
                | DataError::UnknownCategory { .. }
                | DataError::ColumnMismatch { .. }
                | DataError::Empty,
            ) => exit::IO,
            CliError::Train(TrainError::Divergence { .. }) => exit::DIVERGENCE,
            CliError::Train(TrainError::Data(DataError::Io { .. })) => exit::IO,
            _ => exit::VALIDATION,
        }
    }
}
