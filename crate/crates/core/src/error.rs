use crate::autodiff::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid task parameters: {0}")]
    Task(String),
    #[error("non-finite loss at iteration {iteration}: task={task_loss} meta={meta_loss}")]
    NonFiniteLoss {
        iteration: u64,
        task_loss: f64,
        meta_loss: f64,
    },
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
