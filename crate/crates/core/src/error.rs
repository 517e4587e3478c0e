use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("su(n) requires n >= 2, got n = {0}")]
    InvalidRank(usize),

    #[error("level must be a positive integer, got k = {0}")]
    InvalidLevel(i64),

    #[error("expected {expected} Dynkin labels, got {got}")]
    LabelLength { expected: usize, got: usize },

    #[error("no generator construction for weight {labels:?} (only fundamental weights are supported)")]
    UnsupportedWeight { labels: Vec<u32> },

    #[error("the zero weight has no null-vector conditions")]
    ZeroWeight,

    #[error("invariant subspace has dimension {0}, expected 2")]
    InvariantDimension(usize),

    #[error("self-adjoint case needs even n, got n = {0}")]
    OddRank(usize),

    #[error("coupling T_ij needs distinct legs, got i = j = {0}")]
    SameLeg(usize),

    #[error("leg index {leg} out of range for {legs} legs")]
    LegOutOfRange { leg: usize, legs: usize },

    #[error("singular position: {0}")]
    SingularPosition(String),

    #[error("fractional-power branch lost: {0}")]
    BranchLost(String),

    #[error("inconsistent null-vector data: {0}")]
    Inconsistent(String),

    #[error("no null-vector solution: {0}")]
    NoSolution(String),

    #[error("kappa is not fixed on the degenerate branch")]
    KappaFree,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
