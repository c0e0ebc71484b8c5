use thiserror::Error;

use crate::data::Side;

/// Errors raised by the estimators.
///
/// Every variant names its category so that callers (the CLI in particular)
/// can report where a failure happened without string matching.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdError {
    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("period {0} is not present in the dataset")]
    UnknownPeriod(i64),

    #[error("insufficient support: {available} positively weighted observations, need at least {required}")]
    InsufficientSupport { available: usize, required: usize },

    #[error("singular design: condition number {condition:.3e} exceeds 1e12")]
    SingularDesign { condition: f64 },

    #[error("polynomial order {order} is too low, need at least {required}")]
    OrderTooLow { order: usize, required: usize },

    #[error("fit failed in period {period} ({side} side): {source}")]
    Fit {
        period: i64,
        side: Side,
        #[source]
        source: Box<RdError>,
    },

    #[error("no residual for unit `{unit}` in period {period}")]
    MissingResidual { unit: String, period: i64 },

    #[error("cross-period covariances are undefined under repeated cross-section sampling")]
    SchemeMismatch,

    #[error("assembled variance {0:e} is not positive")]
    NegativeVariance(f64),

    #[error("comparison set is empty: {0}")]
    EmptyComparisonSet(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("treatment discontinuity {0:.4} is too weak (|D^W| < 0.05)")]
    WeakDiscontinuity(f64),

    #[error("standard error must be positive, got {0}")]
    NonPositiveSe(f64),

    #[error("bin width must be positive and finite, got {0}")]
    NonPositiveBinWidth(f64),

    #[error("period {0} is an RD period; composition effects need an all-treated or all-untreated baseline")]
    TaxonomyViolation(i64),

    #[error("operation requires panel data: {0}")]
    NotPanel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),
}

impl RdError {
    pub(crate) fn in_fit(self, period: i64, side: Side) -> RdError {
        RdError::Fit {
            period,
            side,
            source: Box::new(self),
        }
    }

    /// Short machine-readable category, used for CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            RdError::NonPositiveBandwidth(_) => "bandwidth",
            RdError::UnknownPeriod(_) => "unknown-period",
            RdError::InsufficientSupport { .. } => "insufficient-support",
            RdError::SingularDesign { .. } => "singular-design",
            RdError::OrderTooLow { .. } => "order",
            RdError::Fit { source, .. } => source.category(),
            RdError::MissingResidual { .. } => "missing-residual",
            RdError::SchemeMismatch => "scheme",
            RdError::NegativeVariance(_) => "negative-variance",
            RdError::EmptyComparisonSet(_) => "empty-comparison-set",
            RdError::InvalidWeights(_) => "weights",
            RdError::WeakDiscontinuity(_) => "weak-discontinuity",
            RdError::NonPositiveSe(_) => "nonpositive-se",
            RdError::NonPositiveBinWidth(_) => "bin-width",
            RdError::TaxonomyViolation(_) => "taxonomy",
            RdError::NotPanel(_) => "not-panel",
            RdError::Config(_) => "config",
            RdError::InvalidData(_) => "data",
        }
    }
}

pub type Result<T> = std::result::Result<T, RdError>;
