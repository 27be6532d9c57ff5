use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between reading a case file and reporting a placement.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed case: {0}")]
    MalformedCase(String),
    #[error("case has no slack bus")]
    MissingSlack,
    #[error("duplicate bus id {0}")]
    DuplicateBusId(u32),
    #[error("branch {index} ({from} -> {to}) references missing bus {missing}")]
    DanglingBranch {
        index: usize,
        from: u32,
        to: u32,
        missing: u32,
    },
    #[error("branch {index} ({from} -> {to}) has non-positive reactance {x}")]
    InvalidReactance { index: usize, from: u32, to: u32, x: f64 },
    #[error("network is disconnected: {components} components")]
    DisconnectedNetwork { components: usize },
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("no branch between buses {0} and {1}")]
    UnknownBranch(u32, u32),
    #[error("unknown candidate {0}")]
    UnknownCandidate(u32),
    #[error("invalid candidate {id}: {reason}")]
    InvalidCandidate { id: u32, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix is not positive definite after jitter: {0}")]
    NotPositiveDefinite(String),
    #[error("{patterns} failure patterns exceed the enumeration cap of {cap}; use Monte Carlo mode")]
    PatternExplosion { patterns: f64, cap: f64 },
    #[error("{count} candidate channel subsets exceed the cap of {cap}")]
    CandidateExplosion { count: usize, cap: usize },
    #[error("search space of {size} subsets exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: f64, cap: f64 },
    #[error("cover equivalence violated for subsets {set:?}: mutual information {mi}, expected {expected}")]
    EquivalenceViolation {
        set: Vec<usize>,
        mi: f64,
        expected: f64,
    },
    #[error("sample covariance is degenerate: {0}")]
    DegenerateSampleCovariance(String),
}

impl Error {
    /// Numerical failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix(_)
                | Error::NotPositiveDefinite(_)
                | Error::PatternExplosion { .. }
                | Error::SearchSpaceTooLarge { .. }
                | Error::DegenerateSampleCovariance(_)
        )
    }
}
