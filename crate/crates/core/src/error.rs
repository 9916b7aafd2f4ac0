use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::ClassifyError;
use crate::config::ConfigError;
use crate::graph::GraphError;
use crate::keypoints::IngestError;
use crate::scan::ScanError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Each module keeps its own error enum; this one wraps
/// them so the pipeline and CLI can propagate with `?`.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by reading or decoding input files.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::File { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Synth(_)
                | Error::Ingest(IngestError::Io(_))
        ) || matches!(self, Error::Ingest(IngestError::MalformedRow { .. } | IngestError::NonMonotonicFrames { .. }))
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

/// Open a file, naming it in the error.
pub fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

/// Read a whole file as text, naming it in the error.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}
