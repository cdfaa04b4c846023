use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// A precondition on the arguments failed.
    #[error("domain error: {0}")]
    Domain(String),

    /// Materializing a set would exceed the caller's work budget.
    #[error("budget exceeded: {what} needs {needed} work items, budget is {budget}")]
    Budget { what: String, needed: String, budget: u64 },

    /// Neither half passed the test even after the refinement cap.
    #[error("indeterminate step {step}: left half {left}, right half {right}, threshold {threshold}")]
    Indeterminate { step: u64, left: String, right: String, threshold: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
