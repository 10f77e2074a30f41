use thiserror::Error;

/// Errors produced by problem loading, schedule construction and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown preset: {0}")]
    UnknownPreset(String),

    #[error("unsupported pattern: {0}")]
    UnsupportedPattern(String),

    #[error("schedule family `{family}` requires {requirement}")]
    FamilyMismatch { family: String, requirement: String },

    #[error("plan does not match graph: {0}")]
    PlanMismatch(String),

    #[error("deadlock: {0}")]
    Deadlock(String),

    #[error("memory infeasible: {0}")]
    MemoryInfeasible(String),

    #[error("no feasible schedule found: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
