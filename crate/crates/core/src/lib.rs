//! Balancing-weight estimators of the weighted average treatment effect
//! E[g(X)τ(X)]/E[g(X)] for a selection function g of the propensity score.
//!
//! The pipeline is: validate data ([`data`]), fit the propensity and outcome
//! models ([`glm`]), form weights ([`weights`]), estimate ([`estimators`]),
//! attach a variance ([`variance`]) and inspect overlap and balance
//! ([`diagnostics`]). [`analysis`] strings these together and
//! [`simulation`] reproduces replicated studies.
//!
//! Replicate loops (bootstrap, Monte Carlo, superpopulations) run on rayon
//! when the `parallel` feature is on; see [`par::Execution`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod linalg;
pub mod par;
pub mod scheme;
pub mod simulation;
pub mod variance;
pub mod weights;

pub use analysis::{analyze, AnalysisConfig, EstimateReport, EstimatorMode, VarianceMethod};
pub use data::{validate_dataset, Dataset, RawTable};
pub use error::{Error, ErrorClass, Result};
pub use glm::{DesignSpec, FittedOutcome, FittedPropensity, LogisticOptions, Term};
pub use par::Execution;
pub use scheme::{validate_scheme, SchemeKind, SchemeParams, WeightScheme};
pub use weights::{SmoothedMatchingCoeffs, WeightSet};
