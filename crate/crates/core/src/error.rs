use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subtask index {index} out of range for {n} subtasks")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("precondition references form a cycle")]
    Cycle,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),

    #[error("{n} variables exceed the enumeration bound of {max}")]
    EnumerationBound { n: usize, max: usize },

    #[error("invalid environment config: {0}")]
    InvalidEnvConfig(String),

    #[error("subtask {0} is not eligible")]
    IneligibleOption(usize),

    #[error("subtask {0} is already complete")]
    AlreadyComplete(usize),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("no legal option available")]
    NoLegalOption,

    #[error("conflicting eligibility labels for subtask {subtask} at the same completion vector")]
    ConflictingLabels { subtask: usize },

    #[error("degenerate baseline: R_max equals R_min ({0})")]
    DegenerateBaseline(f64),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}
