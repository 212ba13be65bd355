//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error in {path} row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid parameter descriptor `{name}`: {message}")]
    InvalidDescriptor { name: String, message: String },

    #[error("invalid registry: {0}")]
    InvalidRegistry(String),

    #[error("parameter vector length {got} does not match registry dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory grids mismatch: {0}")]
    GridMismatch(String),

    #[error("fitness contract violation: {0}")]
    FitnessContract(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("campaign data error: {0}")]
    CampaignData(String),

    #[error("external backend failure: {0}")]
    ExternalBackend(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
