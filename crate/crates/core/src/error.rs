use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The single-buyer revenue curve is maximised only in the limit q -> 0, v -> infinity.
    #[error("monopoly point is at infinity (q = 0, v = inf)")]
    MonopolyAtInfinity,

    #[error("density is numerically zero at x = {x} inside the support")]
    DegenerateDensity { x: f64 },

    #[error("order-statistic index {i} outside [1, {max}]")]
    IndexOutOfRange { i: usize, max: usize },

    #[error("no root of the averaging quadratic in [{lo}, {hi}] (s = {s}, roots {roots:?})")]
    NoRootInBracket {
        lo: f64,
        hi: f64,
        s: usize,
        roots: (f64, f64),
    },

    #[error("iteration cap {iterations} reached with spread {spread:e}")]
    MaxIterationsExceeded { iterations: usize, spread: f64 },

    #[error("unbounded support requires an explicit cutoff")]
    UnboundedSupportWithoutCutoff,

    #[error("allocation uses {total} units but only {k} are available")]
    CapacityViolation { total: f64, k: usize },

    #[error("buyer {buyer} does not have a regular distribution")]
    IrregularInstance { buyer: usize },

    #[error("k = {k} is too small, need k >= {min}")]
    KTooSmall { k: usize, min: usize },

    #[error("k = {k} outside the supported range {range}")]
    KOutOfRange { k: usize, range: &'static str },

    #[error("quadrature tolerance {requested:e} not achieved (estimate {achieved:e})")]
    ToleranceNotAchieved { requested: f64, achieved: f64 },

    #[error("x = {x} is not above the threshold {threshold}")]
    BelowThreshold { x: f64, threshold: f64 },

    #[error("no sign change for bisection on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("matroid rank {k} exceeds the number of pairs {m}")]
    RankExceedsPairs { k: usize, m: usize },

    #[error("order is not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },
}
