use thiserror::Error;

/// Errors produced by weight construction, integration and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("segments overlap or are out of order near t = {0}")]
    OverlappingSegments(f64),

    #[error("t = {t} precedes the domain start {start}")]
    BeforeDomainStart { t: f64, start: f64 },

    #[error("invalid time interval [{t0}, {t1}]")]
    InvalidInterval { t0: f64, t1: f64 },

    #[error("subset must be a non-empty proper subset of the {n} agents")]
    InvalidSubset { n: usize },

    #[error("a system needs at least two agents, got {0}")]
    TooFewAgents(usize),

    #[error("cut enumeration supports at most {limit} agents, got {n}")]
    EnumerationLimit { n: usize, limit: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite state encountered at t = {t}")]
    NumericalFailure { t: f64 },

    #[error(
        "cut {cut} accumulated only {reached:.6} of the required unit influence \
         by the end of the weight schedule at t = {horizon}"
    )]
    ConnectivityHorizon {
        /// 1-based agent labels of the starving subset, e.g. "{1,3}".
        cut: String,
        reached: f64,
        horizon: f64,
    },

    #[error("cut ratio hypothesis violated: {0}")]
    RatioHypothesis(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
