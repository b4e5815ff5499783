//! Credal ensembles built from relative-likelihood thresholds.
//!
//! The crate trains small feed-forward classifiers, stops ensemble members at
//! prescribed relative-likelihood levels, and turns the resulting finite
//! prediction sets into credal sets (class-wise probability intervals or
//! convex hulls of the member predictions). On top of those sets it provides
//! entropy-based epistemic-uncertainty bounds and the coverage/efficiency
//! metrics used to compare credal predictors in a Pareto sense.
//!
//! Modules:
//!
//! - [`nn`]: dense ReLU/softmax networks, cross-entropy training, ToBias
//!   output-bias initialization.
//! - [`likelihood`]: log-likelihood and relative likelihood of models, plus
//!   the closed-form Bernoulli relative-likelihood curve and its alpha-cuts.
//! - [`training`]: threshold schedules, early-stopped member training, and
//!   ensemble constructors (relative-likelihood, plain deep ensembles, and
//!   distance-pruned prediction sets).
//! - [`credal_sets`]: interval and hull credal sets, membership predicates,
//!   coverage and efficiency.
//! - [`uncertainty`]: exact and numeric upper/lower Shannon entropy over
//!   credal sets and the epistemic-uncertainty gap.
//! - [`evaluation`]: test-set aggregation, AUROC, Pareto fronts.
//! - [`datasets`]: synthetic generators with known ground-truth conditional
//!   distributions, OoD shifts, CSV ingestion.
//!
//! With the default `parallel` feature, per-instance and per-member loops run
//! on rayon; disabling it yields a fully sequential build with identical
//! results.

pub mod credal_sets;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod likelihood;
pub mod nn;
pub mod prob;
mod rng;
pub mod training;
pub mod uncertainty;

pub use credal_sets::{CredalSet, FiniteCredalSample, HullCredalSet, IntervalCredalSet};
pub use error::{Error, Result};
pub use nn::{Mlp, OptimizerConfig, OptimizerKind, Trainer};
pub use prob::ProbabilityDistribution;
pub use training::{CrlConfig, CrlEnsemble, TrainedMember};
pub use uncertainty::EntropyBounds;
