use thiserror::Error;

use crate::gf2::Gf2Error;

/// Diagnostics attached to a driver step that could not complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub step: String,
    pub detail: String,
    /// Records of the steps that did complete, serialized.
    pub trace: Vec<String>,
}

/// Errors shared across the crate.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("size guard: {0}")]
    SizeGuard(String),
    #[error("budget exceeded: need {needed}, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("form is not symmetric in {0}")]
    NotSymmetric(String),
    #[error("form is not strongly symmetric")]
    NotStronglySymmetric,
    #[error("certificate invalid: {0}")]
    InvalidCertificate(String),
    #[error("no point found after {trials} trials: {detail}")]
    NotFound { trials: u64, detail: String },
    #[error("coefficient equality violated: {0}")]
    EqualityViolated(String),
    #[error("policy could not decide: {0}")]
    PolicyUndecided(String),
    #[error("linear system infeasible: {0}")]
    Infeasible(String),
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("step {} failed: {}", .0.step, .0.detail)]
    StepFailed(Box<StepFailure>),
}

impl Error {
    pub fn step_failed(step: impl Into<String>, detail: impl Into<String>, trace: Vec<String>) -> Self {
        Error::StepFailed(Box::new(StepFailure { step: step.into(), detail: detail.into(), trace }))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
