use thiserror::Error;

/// Errors from the tensor / autodiff layer.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("backward root must be a scalar, got {len} elements")]
    NotScalar { len: usize },
    #[error("backward called on a graph with no tracked leaves")]
    UntrackedGraph,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("temporal positions out of order: t1={t1} > t2={t2}")]
    TemporalOrder { t1: i64, t2: i64 },
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
}

/// Errors from the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Errors from backward sampling and pair generation.
#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("expert trajectory invalid: {0}")]
    InvalidExpert(String),
    #[error("pair class unsatisfiable: no {class} pairs exist in this tree")]
    ClassUnsatisfiable { class: &'static str },
    #[error("tree i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("tree format: {0}")]
    Format(String),
}

/// Errors from reward-model training and evaluation.
#[derive(Debug, Error)]
pub enum RewardError {
    #[error("pair dataset is empty or missing a class: {0}")]
    Dataset(String),
    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("reward model integrity: start/goal latent distance is degenerate")]
    DegenerateDenominator,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Errors from experiment orchestration.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error("artifact i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact format: {0}")]
    Format(String),
}

/// Errors from policy training.
#[derive(Debug, Error)]
pub enum SacError {
    #[error("training diverged: non-finite {which} loss at step {step}")]
    Divergence { which: &'static str, step: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
}
