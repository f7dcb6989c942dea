use thiserror::Error;

/// Crate-wide error type. Every pipeline stage tags its own failures so the
/// CLI can report which stage broke.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("qp solver: {0}")]
    Qp(String),

    #[error("novelty: {0}")]
    Novelty(String),

    #[error("consistency: {0}")]
    Consistency(String),

    #[error("policy: {0}")]
    Policy(String),

    #[error("perception: {0}")]
    Perception(String),

    #[error("synth: {0}")]
    Synth(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
