//! Crate-wide error type.
//!
//! A single enum keeps the error surface flat: every fallible operation in
//! the crate reports one of these variants, and the CLI maps them onto exit
//! codes (`NotConverged` → 2, everything else → 1).

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched dimensions between inputs (lengths reported in the message).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A subsampling probability required to be strictly positive was not.
    #[error("subsampling weight at index {index} must be positive, got {value}")]
    NonpositiveWeight { index: usize, value: f64 },

    /// The weighted information matrix (or another symmetric system) could
    /// not be solved, even after ridge jitter.
    #[error("information matrix is numerically singular ({context})")]
    SingularInformation { context: String },

    /// Newton iteration exhausted `max_iter` (or stalled) without driving the
    /// score norm below tolerance. Carries the last iterate.
    #[error(
        "solver did not converge after {iterations} iterations \
         (final score norm {final_score_norm:.6e})"
    )]
    NotConverged {
        beta: Vec<f64>,
        iterations: usize,
        final_score_norm: f64,
    },

    /// A linear predictor left the representable exponential range.
    #[error("linear predictor overflowed the exponential range (theta = {theta})")]
    Overflow { theta: f64 },

    /// A response value was required but is not observed in the store.
    #[error("response at row {row} is required but not observed")]
    MissingResponses { row: usize },

    /// Pilot subsample too small to identify the model.
    #[error("pilot size r0 = {r0} must be at least p + 1 = {min}")]
    PilotTooSmall { r0: usize, min: usize },

    /// Sampling weights that cannot define a distribution (all zero, NaN, ...).
    #[error("degenerate sampling weights: {0}")]
    DegenerateWeights(String),

    /// A design matrix with numerical rank below its column count where full
    /// rank is required.
    #[error("design matrix is rank deficient (numerical rank {rank} < p = {p})")]
    RankDeficient { rank: usize, p: usize },

    /// Scenario family/design combination that is not defined.
    #[error("incompatible scenario: {0}")]
    IncompatibleScenario(String),

    /// Method cannot run under the requested measurement regime.
    #[error("method `{method}` is infeasible here: {reason}")]
    InfeasibleMethod { method: String, reason: String },

    /// Not enough replications for the requested diagnostic.
    #[error("too few replications: got {got}, need at least {min}")]
    TooFewReplications { got: usize, min: usize },

    /// A sample whose spread is zero (or otherwise unusable) for a diagnostic.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// NaN or infinite covariate encountered on load.
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },

    /// Unknown key in a run-configuration file.
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    /// A configuration or flag value that fails validation.
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(..) => "dimension-mismatch",
            Error::NonpositiveWeight { .. } => "nonpositive-weight",
            Error::SingularInformation { .. } => "singular-information",
            Error::NotConverged { .. } => "not-converged",
            Error::Overflow { .. } => "overflow",
            Error::MissingResponses { .. } => "missing-responses",
            Error::PilotTooSmall { .. } => "pilot-too-small",
            Error::DegenerateWeights(..) => "degenerate-weights",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::IncompatibleScenario(..) => "incompatible-scenario",
            Error::InfeasibleMethod { .. } => "infeasible-method",
            Error::TooFewReplications { .. } => "too-few-replications",
            Error::DegenerateSample(..) => "degenerate-sample",
            Error::Parse { .. } => "parse",
            Error::NonFiniteValue { .. } => "non-finite-value",
            Error::UnknownKey(..) => "unknown-key",
            Error::InvalidValue { .. } => "invalid-value",
            Error::Io(..) => "io",
        }
    }
}
