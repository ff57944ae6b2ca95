use thiserror::Error;

/// Errors shared across the crate. Contract violations (stepping a finished
/// episode, expanding past the depth limit) are reported as errors rather
/// than panics so that harness code can surface them with context.
#[derive(Debug, Error)]
pub enum Error {
    #[error("environment episode already terminated; reset before stepping")]
    EpisodeOver,

    #[error("action {action} out of range (|A| = {action_count})")]
    ActionOutOfRange { action: usize, action_count: usize },

    #[error("invalid state encoding: {0}")]
    InvalidEncoding(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("search depth limit {limit} reached; reset before expanding")]
    DepthLimit { limit: usize },

    #[error("broken tree path at position {0}")]
    BrokenPath(usize),

    #[error("node {0} not found in tree")]
    NodeNotFound(usize),

    #[error("sequence too short: need {need} entries, got {got}")]
    SequenceTooShort { need: usize, got: usize },

    #[error("non-finite loss in term `{term}` (value {value})")]
    NonFiniteLoss { term: &'static str, value: f64 },

    #[error("level is not solvable within {max_steps} steps: {level}")]
    UnsolvableLevel { level: String, max_steps: usize },

    #[error("invalid level text: {0}")]
    BadLevel(String),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),

    #[error("search budget too small: need {need} planning steps, have {have}")]
    BudgetTooSmall { need: usize, have: usize },

    #[error("malformed tree snapshot: {0}")]
    BadSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
