//! Regression discontinuity estimation across multiple time periods.
//!
//! Each period's outcome discontinuity is estimated with one-sided local
//! polynomial fits; jumps from periods where nobody (or everybody) is treated
//! are used to net out the part of the target period's jump that would exist
//! without treatment. Standard errors account for how units are sampled
//! across periods: fresh cross-sections, a panel with a fixed running
//! variable, or a panel whose running variable changes.

pub mod composition;
pub mod covariance;
pub mod data;
pub mod discontinuity;
pub mod error;
pub mod estimate;
pub mod fit;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod sim;

pub use covariance::Estimator;
pub use data::{Design, Observation, PanelDataset, PeriodTaxonomy, Sampling, Side, UnitId};
pub use discontinuity::{bc_discontinuity, discontinuity, event_study, PeriodDiscontinuity, Target};
pub use error::{RdError, Result};
pub use estimate::{compare_jumps, estimate, EffectEstimate, Estimand, FitSpec, Trend, WeightScheme};
pub use kernel::Kernel;

// The guide's snippets run as doctests so the book cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
