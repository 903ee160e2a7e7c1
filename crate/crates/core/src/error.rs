use thiserror::Error;

pub type Shape = (usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Shape),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite hidden state at scan step {0}")]
    NonFiniteState(usize),

    #[error("non-finite loss at training step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment: {0}")]
    Env(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
