//! Optimal likelihood-ratio tests for parametric models whose support
//! boundary moves with the parameter.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: nonregular families `f(y|θ)·1{y ≥ g(θ)}` and their covariate
//!   extension, plus samplers.
//! - [`lratio`]: finite-sample likelihood-ratio statistics with explicit
//!   support-indicator semantics.
//! - [`limit`]: the shifted-exponential limit experiment, its Neyman–Pearson
//!   tests, power envelopes and asymptotic lower bounds.
//! - [`nlr`]: the randomized NLR tests (one-sided, two-sided, general case)
//!   and confidence sets by test inversion.
//! - [`estimate`]: sample splitting and plug-in nuisance estimates.
//! - [`wald`]: the MLE-based Wald comparator.
//! - [`sim`]: reproducible Monte Carlo power studies and CSV output.

pub mod error;
pub mod estimate;
pub mod limit;
pub mod lratio;
pub mod model;
pub mod nlr;
pub mod sim;
pub mod special;
pub mod wald;

pub use error::{Error, Result};
pub use estimate::{NuisanceEstimates, SplitRule};
pub use limit::{LevelLimit, LimitParams, Side};
pub use lratio::LrValue;
pub use model::{CovariateModelSpec, ModelSpec, Sample};
pub use nlr::{Branch, Hbar, HbarPolicy, Randomization, Statistic, TestConfig, TestOutcome};
pub use sim::{PowerStudy, Scenario};
pub use wald::WaldConfig;

/// Library version echoed into simulation metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
