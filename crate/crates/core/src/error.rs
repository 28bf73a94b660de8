use crate::types::TaskId;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),

    #[error("unknown task id {0}")]
    UnknownTask(TaskId),

    #[error("task {task}: {successes} successes out of {sampled} trajectories")]
    InvalidCounts {
        task: TaskId,
        sampled: u64,
        successes: u64,
    },

    #[error("success-rate weighting needs a successful trajectory, got reward {0}")]
    FailedTrajectory(f64),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("action {action} outside alphabet of size {alphabet}")]
    ActionOutOfRange { action: u32, alphabet: u32 },

    #[error("policy could not produce an action: {0}")]
    Policy(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}
