//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the decoding pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unknown task kind: {0}")]
    UnknownTask(String),

    #[error("class {label:?} has {count} trials; at least 4 required")]
    ClassTooSmall { label: String, count: usize },

    #[error("all channels are marked bad")]
    AllChannelsBad,

    #[error("invalid filter band: {0}")]
    InvalidBand(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("negative value passed to {0}")]
    NegativeInput(&'static str),

    #[error("zero variance input; correlation undefined")]
    ZeroVariance,

    #[error("infeasible alignment: target needs {needed} frames, got {got}")]
    InfeasibleAlignment { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("generator config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("model has not been trained")]
    Untrained,

    #[error("no voiced frames in input")]
    NoVoicedFrames,

    #[error("stage {stage} failed{}: {source}", trial.as_deref().map(|t| format!(" on trial {t}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        trial: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str, trial: Option<String>) -> Self {
        Error::Stage {
            stage,
            trial,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
