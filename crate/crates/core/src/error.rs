use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {actual} frames/samples given, at least {required} required")]
    InputTooShort { required: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite values in tensor `{0}`")]
    NonFinite(String),

    #[error("class index {index} out of range for {classes} classes")]
    InvalidClass { index: usize, classes: usize },

    #[error("wav: {0}")]
    Wav(String),

    #[error("cannot resample from {from} Hz up to {to} Hz; only downsampling is supported")]
    Upsampling { from: u32, to: u32 },

    #[error("degenerate label distribution for language `{language}`, trait `{trait_name}` (std {std:.3e})")]
    DegenerateLabels {
        language: String,
        trait_name: String,
        std: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("task mismatch: expected {expected}, checkpoint holds {found}")]
    TaskMismatch { expected: String, found: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
