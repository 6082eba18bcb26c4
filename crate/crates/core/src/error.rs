//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough payload
//! to state which structural check failed and where; callers dispatching on
//! exit codes or report warnings match on the variant, not the message.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// A model hypothesis that a closed-form result depends on.
///
/// Stored inside [`Error::HypothesisViolated`] to say exactly which
/// requirement failed; also used by certificates to report which conditions
/// hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Every alpha weight is zero.
    AlphaAllZero,
    /// Every beta weight is zero.
    BetaAllZero,
    /// Every gamma weight is zero.
    GammaAllZero,
    /// At least one beta weight is strictly below one.
    SomeBetaBelowOne,
    /// Total quality is strictly positive.
    PositiveTotalQuality,
    /// Total quality is at least one.
    QualityTotalAtLeastOne,
    /// Every initial per-user total is at least one.
    TotalsAtLeastOne,
    /// Every node reaches an aperiodic node of the deficiency set.
    AperiodicDeficientReachable,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            Hypothesis::AlphaAllZero => "alpha must be zero everywhere",
            Hypothesis::BetaAllZero => "beta must be zero everywhere",
            Hypothesis::GammaAllZero => "gamma must be zero everywhere",
            Hypothesis::SomeBetaBelowOne => "at least one beta weight must be below one",
            Hypothesis::PositiveTotalQuality => "total quality must be positive",
            Hypothesis::QualityTotalAtLeastOne => "total quality must be at least one",
            Hypothesis::TotalsAtLeastOne => "every initial user total must be at least one",
            Hypothesis::AperiodicDeficientReachable => {
                "every node must reach an aperiodic node with a strict deficiency"
            }
        };
        f.write_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to zero and cannot be normalized")]
    ZeroRow { row: usize },

    #[error("target node set is empty")]
    EmptyTargets,

    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("no convergence within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("stationary distribution is not unique: dominant eigenvalue is not simple")]
    NotUnique,

    #[error("matrix power norms left the representable range; last finite k = {k_reached}")]
    Overflow { k_reached: usize },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("total attention is zero at t = {t}")]
    ZeroTotalAttention { t: u64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(Hypothesis),

    #[error("stability condition unmet: nodes {unreachable:?} do not reach the deficiency set")]
    StabilityConditionUnmet { unreachable: Vec<usize> },

    #[error("linear system is singular or failed the residual check")]
    SingularSystem,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("trajectory too short: {records} records, need at least {needed}")]
    TooShort { records: usize, needed: usize },

    #[error("weights match more than one special regime; dispatch is ambiguous")]
    AmbiguousRegime,

    #[error("unknown protocol {0:?}; expected fig1, fig2, or fig3")]
    UnknownProtocol(String),

    #[error("invalid scenario field {key}: {constraint}")]
    ScenarioField { key: String, constraint: String },

    #[error("malformed JSON: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        // serde_json's Display already carries line and column information.
        Error::Json(e.to_string())
    }
}
