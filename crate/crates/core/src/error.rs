use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants fall into two families that callers (notably the CLI) treat
/// differently: input/contract violations, and data that is well-formed but
/// too degenerate for an estimator. See [`Error::is_degenerate`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid {field} at index {index}: {reason}")]
    InvalidRecord {
        index: usize,
        field: &'static str,
        reason: String,
    },

    #[error("assignment probability p = {0} must lie strictly between 0 and 1")]
    InvalidProbability(f64),

    #[error("assignment probability p is required for this operation")]
    MissingProbability,

    #[error("privacy budget {name} = {value} must be positive and finite")]
    InvalidBudget { name: &'static str, value: f64 },

    #[error("expected {expected} budget components for scenario {scenario}, got {got}")]
    BudgetArity {
        scenario: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("scenario mismatch: expected {expected}, got {got}")]
    ScenarioMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("covariate dimension mismatch at index {index}: expected {expected}, got {got}")]
    RaggedCovariates {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("records carry no covariates")]
    MissingCovariates,

    #[error("Laplace scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("significance level alpha = {0} must lie in (0, 1]")]
    InvalidAlpha(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("privatized group w = {group} has {count} records, need at least {needed}")]
    DegenerateGroup {
        group: u8,
        count: usize,
        needed: usize,
    },

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("ratio estimator denominator is exactly zero ({0})")]
    DegenerateDenominator(&'static str),

    #[error("design matrix for group w = {0} is singular")]
    SingularDesign(u8),
}

impl Error {
    /// True for failures caused by the realised data rather than by the
    /// caller's inputs (too few units in a group, singular designs, zero
    /// denominators).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGroup { .. }
                | Error::TooFewRecords { .. }
                | Error::DegenerateDenominator(_)
                | Error::SingularDesign(_)
        )
    }
}
