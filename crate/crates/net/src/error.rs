use thiserror::Error;

use crate::model::Model;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("bad input size for {what}: expected {expected} points, got {got}")]
    BadInputSize {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("bad feature dimension: expected {expected}, got {got}")]
    BadFeatureDim { expected: usize, got: usize },
    #[error("prior path needs ground truth and is unavailable at inference")]
    PriorUnavailableAtInference,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    TrainingDiverged {
        epoch: usize,
        step: usize,
        /// Best model seen before the failure, if any epoch completed.
        last_good: Option<Box<Model>>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] usx_core::Error),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;
