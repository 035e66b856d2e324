use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GraspError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("degenerate quaternion (norm {norm:e}); optimizer state is invalid")]
    DegenerateQuaternion { norm: f64 },

    #[error("invalid workspace: min {min:?} is not <= max {max:?}")]
    InvalidWorkspace { min: [f64; 3], max: [f64; 3] },

    #[error("scene has no graspable object")]
    NoGraspableObject,

    #[error("scene placement failed after {tries} attempts")]
    PlacementFailed { tries: usize },

    #[error("non-finite gradient component at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("invalid weights file: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene file: {0}")]
    InvalidScene(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<GraspError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GraspError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GraspError::Io {
            path: path.into(),
            source,
        }
    }
}
