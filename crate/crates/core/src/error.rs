use crate::channel::Mask;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("subset mask {mask:#b} is out of range for {users} users")]
    SubsetOutOfRange { mask: Mask, users: usize },

    #[error("sets {first:#b} and {second:#b} must be disjoint")]
    OverlappingSets { first: Mask, second: Mask },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error(
        "erasure probabilities are inconsistent: pattern {mask:#b} would have probability {prob:e}"
    )]
    InconsistentDeltas { mask: Mask, prob: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid search grid: {0}")]
    InvalidGrid(String),

    #[error("too many users ({users}) for permutation enumeration, at most 8 are supported")]
    TooManyPermutations { users: usize },

    #[error("all users are erased with certainty, no positive rate is achievable")]
    AllErased,

    #[error(
        "sample batch needs {needed} bytes but the budget is {budget} bytes; use streaming mode"
    )]
    MemoryBudget { needed: usize, budget: usize },

    #[error("integrand returned a non-finite value at sample {index}")]
    NonFinite { index: usize },

    #[error("matrix is not Hermitian positive definite")]
    NotPositiveDefinite,

    #[error("degenerate rate term: {0}")]
    Degenerate(String),
}

impl Error {
    /// Failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NotPositiveDefinite | Error::Degenerate(_)
        )
    }
}
