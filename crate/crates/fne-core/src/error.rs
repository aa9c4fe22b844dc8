use alloc::string::String;
use core::fmt;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Average pooling over an empty token set.
    EmptyTokenSet,
    /// A zero-norm vector where a direction is required. Carries the
    /// offending candidate index when one exists.
    ZeroNorm { index: Option<usize> },
    /// Vector or parameter shapes disagree.
    DimensionMismatch { expected: usize, found: usize },
    /// A non-finite value reached a numerical routine.
    NonFinite { context: &'static str, index: usize },
    /// The distribution tracker has not admitted enough samples; the caller
    /// must use the fallback sampling path.
    TrackerNotReady,
    /// An enqueue larger than the bank capacity.
    BatchExceedsCapacity { batch: usize, capacity: usize },
    /// A candidate pool with no entries.
    EmptyPool,
    /// All sampling weights are zero.
    ZeroWeights,
    /// A configuration value outside its documented range.
    InvalidConfig(String),
    /// The synthetic data spec cannot be realized (e.g. cluster centers
    /// cannot be separated).
    InfeasibleSpec(String),
    /// A diagnostic that needs ground-truth cluster labels was asked of a
    /// dataset without them.
    MissingClusterLabels,
    /// A retrieval query with no ground-truth candidates.
    EmptyGroundTruth { query: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyTokenSet => write!(f, "token set is empty"),
            Error::ZeroNorm { index: Some(i) } => {
                write!(f, "zero-norm embedding at index {i}")
            }
            Error::ZeroNorm { index: None } => write!(f, "zero-norm embedding"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite { context, index } => {
                write!(f, "non-finite value in {context} at index {index}")
            }
            Error::TrackerNotReady => {
                write!(f, "distribution tracker not ready: fallback required")
            }
            Error::BatchExceedsCapacity { batch, capacity } => {
                write!(f, "batch of {batch} exceeds bank capacity {capacity}")
            }
            Error::EmptyPool => write!(f, "candidate pool is empty"),
            Error::ZeroWeights => write!(f, "all sampling weights are zero"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InfeasibleSpec(msg) => write!(f, "infeasible spec: {msg}"),
            Error::MissingClusterLabels => {
                write!(f, "dataset has no cluster labels")
            }
            Error::EmptyGroundTruth { query } => {
                write!(f, "query {query} has no ground-truth candidates")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
