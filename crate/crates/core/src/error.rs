use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// `A2` does not have full column rank, so `A2^T A2` is singular.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("fewer than two usable (non-zero) columns: {usable} of {total}")]
    InsufficientColumns { usable: usize, total: usize },

    /// Subset enumeration ran out of budget. Every subset of size `<= verified_k`
    /// was checked and found independent, so `spark > verified_k`.
    #[error("subset budget of {budget} exhausted; spark > {verified_k} is certified")]
    BudgetExceeded {
        budget: u64,
        verified_k: usize,
        examined: u64,
    },

    #[error("null space of A2^T is trivial")]
    EmptyNullSpace,

    #[error("transform is singular within tolerance")]
    SingularTransform,

    #[error("scaled spark changed from {reference} to {observed} under transform {trial}")]
    InvarianceViolation {
        reference: String,
        observed: String,
        trial: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cap exceeded: {0}")]
    CapExceeded(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
