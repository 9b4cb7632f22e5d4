use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, expected {expected:?} but found {found:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{what}: non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("fraction {0} is outside its admissible range")]
    InvalidFraction(f64),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    /// The r×r projection core stayed singular after the ridge retry.
    #[error("projection core of rank {rank} is singular (condition estimate {condition:e})")]
    SingularProjection { rank: usize, condition: f64 },

    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),

    #[error("non-finite intermediate at iteration {iteration}")]
    NumericalFailure { iteration: usize },

    #[error("cost model has an empty compressed layer (sum of costs is zero)")]
    EmptyCost,
}
