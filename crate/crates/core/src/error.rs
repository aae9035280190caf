use thiserror::Error;

pub type Result<T, E = CrmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CrmError {
    #[error("invalid attribute spec: {0}")]
    InvalidSpec(String),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("cannot decode one-hot vector: {0}")]
    Decode(String),

    #[error("empty group support")]
    EmptySupport,

    #[error("grid of {size} groups exceeds enumeration cap {cap}; use the connected-component characterization instead")]
    EnumerationTooLarge { size: u128, cap: usize },

    #[error("operation requires exactly 2 attributes, got {0}")]
    UnsupportedArity(usize),

    #[error("operation requires a uniform cardinality across attributes")]
    NonUniformCardinality,

    #[error("ambient dimension {n} is smaller than the {required} orthogonal means required")]
    DimensionTooSmall { n: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("group {0} is not in the support")]
    NotInSupport(String),

    #[error("invalid probability table: {0}")]
    InvalidPrior(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("empty dataset")]
    EmptyData,

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CrmError {
    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, CrmError::Diverged { .. })
    }
}
