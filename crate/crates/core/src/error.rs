use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid immigration pair: {0}")]
    InvalidImmigration(String),

    #[error("offspring mean is zero ({0}); logarithm undefined")]
    DegenerateMarginal(String),

    #[error("{capped} of {excursions} excursions hit the cap of {cap} steps; estimate untrusted")]
    ExcursionCapExceeded { capped: u64, excursions: u64, cap: u64 },

    #[error("truncation at K={k} too small: row {row} loses {overflow:.3e} above K (budget {budget:.1e})")]
    TruncationTooSmall { k: usize, row: usize, overflow: f64, budget: f64 },

    #[error("return-time tail not summable within cap {cap}: remainder bound {remainder:.3e}")]
    NonConvergent { cap: usize, remainder: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last change {delta:.3e})")]
    NoConvergence { iterations: usize, delta: f64 },

    #[error("environment enumeration needs {sequences} sequences, above the budget of {budget}")]
    EnumerationTooLarge { sequences: f64, budget: u64 },

    #[error("depth {requested} exceeds the configured bound {max}")]
    DepthTooLarge { requested: u32, max: u32 },

    #[error("series has fewer than two usable points")]
    EmptySeries,

    #[error("nonpositive value {value} at index {index}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("config: {0}")]
    Config(String),
}
