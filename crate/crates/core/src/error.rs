use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("action index {index} out of range (action count {count})")]
    InvalidAction { index: usize, count: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("horizon {horizon} outside 0..={max}")]
    HorizonOutOfRange { horizon: usize, max: usize },
    #[error("policy {0}")]
    HorizonRequirement(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("replay buffer holds no trajectories yet")]
    NotReady,
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("enumeration needs {needed} action sequences, budget is {budget}")]
    EnumerationBudget { needed: u128, budget: u128 },
    #[error("operation requires deterministic dynamics")]
    NotDeterministic,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
