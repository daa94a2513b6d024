use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("generation failed: {0}")]
    GenerationFailure(String),

    #[error("registration failed: {0}")]
    RegistrationFailure(String),

    #[error("correspondence failed: {0}")]
    CorrespondenceFailure(String),

    #[error("oracle failed: object {object} is not supported")]
    OracleFailure { object: usize },

    #[error("circular dependency in dependency graph")]
    CircularDependency,

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("training diverged: {0}")]
    NanLoss(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}{}: {message}", scene_suffix(*.scene))]
    Parse {
        path: PathBuf,
        scene: Option<usize>,
        message: String,
    },
}

fn scene_suffix(scene: Option<usize>) -> String {
    match scene {
        Some(i) => format!(" (scene {i})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// serde_json messages already carry line and column.
    pub(crate) fn json(path: impl Into<PathBuf>, scene: Option<usize>, err: serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            scene,
            message: err.to_string(),
        }
    }
}
