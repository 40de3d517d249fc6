//! Wald test built on the exponential limit of the MLE.
//!
//! Under `θ₀ + h/n`, `n(θ̂ − θ₀ − h/n)` converges to
//! `Exp(1)/(f(g(θ)|θ)·∇_θ g(θ))`, so the `1−α` quantile is `−λ log α`.

use crate::error::{config, Result};
use crate::estimate::mle_theta;
use crate::limit::lambda_benchmark;
use crate::model::{ModelSpec, Sample};
use crate::nlr::{Branch, Statistic, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldConfig {
    pub alpha: f64,
    pub theta0: f64,
    /// Evaluate the quantile at `θ̂` instead of `θ₀`.
    pub quantile_at_estimate: bool,
}

impl WaldConfig {
    pub fn new(alpha: f64, theta0: f64) -> Self {
        Self {
            alpha,
            theta0,
            quantile_at_estimate: false,
        }
    }
}

/// `q_{1−α} = −log α / (f(g(θ)|θ)·∇_θ g(θ))`.
pub fn wald_quantile<M: ModelSpec + ?Sized>(model: &M, theta: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return config(format!("α must lie in (0, 1), got {alpha}"));
    }
    Ok(-alpha.ln() * lambda_benchmark(model, theta)?.lambda)
}

/// Rejects iff `n(θ̂ − θ₀) > q_{1−α}`. Never randomizes.
pub fn wald_test<M: ModelSpec + ?Sized>(model: &M, sample: &Sample, config: &WaldConfig) -> Result<TestOutcome> {
    let theta_hat = mle_theta(model, sample)?;
    let at = if config.quantile_at_estimate {
        theta_hat
    } else {
        config.theta0
    };
    let critical = wald_quantile(model, at, config.alpha)?;
    let scaled = sample.len() as f64 * (theta_hat - config.theta0);
    let branch = if scaled > critical {
        Branch::Reject
    } else {
        Branch::Accept
    };
    let lambda = lambda_benchmark(model, config.theta0)?.lambda;
    Ok(TestOutcome::without_coin(Statistic::Wald { scaled, critical }, branch, None, lambda))
}
