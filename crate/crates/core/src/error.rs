use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A user position coincides with an array element, so the per-element
    /// phase term is undefined.
    #[error("degenerate distance: user {user} coincides with an element of subarray {subarray}")]
    DegenerateDistance { subarray: usize, user: usize },

    /// The channel from a subarray to a user is identically zero (outside the
    /// pattern support or masked out); no precoder exists for the pair.
    #[error("zero channel: subarray {subarray} is invisible to user {user}")]
    ZeroChannel { subarray: usize, user: usize },

    /// A harvested-power floor at or above the rectifier saturation level can
    /// never be met.
    #[error("infeasible threshold: {0}")]
    InfeasibleThreshold(String),

    #[error("internal consistency: {0}")]
    InternalConsistency(String),

    /// The penalty term of the splitting iteration blew up; the trace up to
    /// the failure is attached for diagnosis.
    #[error("solver diverged after {iterations} iterations (penalty grew {growth:.3e}x)")]
    Divergence {
        iterations: usize,
        growth: f64,
        trace: Vec<crate::pa_solver::TracePoint>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined surrogate: the allocation is entirely zero")]
    UndefinedSurrogate,

    #[error("oracle found no feasible candidate")]
    OracleInfeasible,
}

pub type Result<T> = std::result::Result<T, Error>;
