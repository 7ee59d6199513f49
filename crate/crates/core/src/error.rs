use thiserror::Error;

/// Errors raised by the numerics kernel and the control modules built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("eigenvalue solver supports n <= 4, got n = {0}")]
    UnsupportedSize(usize),

    #[error("singular matrix (pivot magnitude {pivot:.3e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("non-finite state at t = {last_valid_time}")]
    Divergence { last_valid_time: f64 },

    #[error("zero image velocity: time-to-transit undefined")]
    UndefinedTau,

    #[error("heading {theta:.6} rad outside the critical cone; gaze misses the wall")]
    NoIntersection { theta: f64 },

    #[error("heading {theta:.6} rad is at a critical angle (denominator {denominator:.3e})")]
    CriticalHeading { theta: f64, denominator: f64 },

    #[error("outside the iterate-map domain: {0}")]
    Domain(String),

    #[error("not controllable under pattern {pattern}: {detail}")]
    NotControllable { pattern: String, detail: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("rank deficient: expected rank {expected}, found {found}")]
    Rank { expected: usize, found: usize },

    #[error(
        "gain solver did not converge (residual {residual:.3e} after {iterations} iterations)"
    )]
    NoSolution { residual: f64, iterations: usize },

    #[error("system matrix is not nilpotent; series gramian unavailable")]
    NotNilpotent,

    #[error("{m} channels is too many to enumerate (limit 16); test specific patterns instead")]
    TooManyChannels { m: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
