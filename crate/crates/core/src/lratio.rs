//! Finite-sample likelihood-ratio statistics.
//!
//! `Z_n(h, h̄)` compares the joint density at `θ₀ + h̄/n` (numerator) with
//! the one at `θ₀ + h/n` (denominator), support indicators included. Products
//! are accumulated as sums of log densities.

use crate::error::{Error, Result};
use crate::model::{CovariateModelSpec, ModelSpec, Sample};

/// Value of a likelihood ratio with its support-indicator outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrValue {
    /// Both indicators pass; `z = exp(log_z)`.
    Value { log_z: f64 },
    /// The denominator indicator passes but the numerator's fails, so `z = 0`.
    NumeratorZero,
    /// The denominator indicator fails and the ratio is `·/0`.
    Indeterminate,
}

impl LrValue {
    /// `z`, or `None` when indeterminate.
    pub fn z(&self) -> Option<f64> {
        match *self {
            LrValue::Value { log_z } => Some(log_z.exp()),
            LrValue::NumeratorZero => Some(0.0),
            LrValue::Indeterminate => None,
        }
    }

    /// `log z`; `-∞` for `NumeratorZero`, `None` when indeterminate.
    pub fn log_z(&self) -> Option<f64> {
        match *self {
            LrValue::Value { log_z } => Some(log_z),
            LrValue::NumeratorZero => Some(f64::NEG_INFINITY),
            LrValue::Indeterminate => None,
        }
    }

    pub fn is_indeterminate(&self) -> bool {
        matches!(self, LrValue::Indeterminate)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LrValue::Value { .. } => "value",
            LrValue::NumeratorZero => "numerator_zero",
            LrValue::Indeterminate => "indeterminate",
        }
    }
}

fn local_theta(theta0: f64, h: f64, n: usize) -> f64 {
    theta0 + h / n as f64
}

/// `Z_n(h, h̄)` for a benchmark family.
///
/// Returns `Indeterminate` when `Y_(1) < g(θ₀+h/n)`. A zero density factor
/// inside the support (the upper end of the uniform family) is handled the
/// same way as the matching indicator.
pub fn lr_benchmark<M: ModelSpec + ?Sized>(
    model: &M,
    sample: &Sample,
    theta0: f64,
    h: f64,
    hbar: f64,
) -> Result<LrValue> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let theta_den = local_theta(theta0, h, n);
    let theta_num = local_theta(theta0, hbar, n);
    if sample.min_y() < model.boundary(theta_den) {
        return Ok(LrValue::Indeterminate);
    }
    let num_in_support = sample.min_y() >= model.boundary(theta_num);

    let mut log_z = 0.0;
    let mut numerator_zero = !num_in_support;
    for &y in sample.values() {
        let den = model.log_density(y, theta_den);
        if den == f64::NEG_INFINITY {
            return Ok(LrValue::Indeterminate);
        }
        if numerator_zero {
            continue;
        }
        let num = model.log_density(y, theta_num);
        if num == f64::NEG_INFINITY {
            numerator_zero = true;
            continue;
        }
        log_z += num - den;
    }
    Ok(if numerator_zero {
        LrValue::NumeratorZero
    } else {
        LrValue::Value { log_z }
    })
}

/// `Z_n^θ(0, h̄)`: the benchmark ratio re-centred at an arbitrary `θ`.
pub fn lr_at_theta<M: ModelSpec + ?Sized>(
    model: &M,
    sample: &Sample,
    theta: f64,
    hbar: f64,
) -> Result<LrValue> {
    lr_benchmark(model, sample, theta, 0.0, hbar)
}

fn resolve_levels<'a, M: CovariateModelSpec + ?Sized>(
    model: &M,
    sample: &'a Sample,
) -> Result<std::borrow::Cow<'a, [usize]>> {
    let n_levels = model.levels().len();
    match sample.levels() {
        Some(levels) => {
            if let Some(&bad) = levels.iter().find(|&&j| j >= n_levels) {
                return Err(Error::UnknownLevel(bad));
            }
            Ok(std::borrow::Cow::Borrowed(levels))
        }
        None if n_levels == 1 => Ok(std::borrow::Cow::Owned(vec![0; sample.len()])),
        None => Err(Error::InvalidInput(
            "covariate model requires a sample with covariate levels".into(),
        )),
    }
}

/// Plug-in ratio `Z_n(h, ȟ, γ̌)` for a covariate family; `γ̌` enters both
/// numerator and denominator.
pub fn lr_plugin<M: CovariateModelSpec + ?Sized>(
    model: &M,
    sample: &Sample,
    theta0: f64,
    h: f64,
    h_check: f64,
    gamma_check: &[f64],
) -> Result<LrValue> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if !h.is_finite() || !h_check.is_finite() || gamma_check.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidInput("plug-in values must be finite".into()));
    }
    if gamma_check.len() != model.gamma_dim() {
        return Err(Error::InvalidInput(format!(
            "γ̌ has {} entries, model expects {}",
            gamma_check.len(),
            model.gamma_dim()
        )));
    }
    let levels = resolve_levels(model, sample)?;
    let theta_den = local_theta(theta0, h, n);
    let theta_num = local_theta(theta0, h_check, n);

    let mut numerator_zero = false;
    for (&y, &j) in sample.values().iter().zip(levels.iter()) {
        if y < model.boundary(j, theta_den) {
            return Ok(LrValue::Indeterminate);
        }
        if y < model.boundary(j, theta_num) {
            numerator_zero = true;
        }
    }

    let mut log_z = 0.0;
    for (&y, &j) in sample.values().iter().zip(levels.iter()) {
        let den = model.log_density(y, j, theta_den, gamma_check);
        if den == f64::NEG_INFINITY {
            return Ok(LrValue::Indeterminate);
        }
        if numerator_zero {
            continue;
        }
        let num = model.log_density(y, j, theta_num, gamma_check);
        if num == f64::NEG_INFINITY {
            numerator_zero = true;
            continue;
        }
        log_z += num - den;
    }
    Ok(if numerator_zero {
        LrValue::NumeratorZero
    } else {
        LrValue::Value { log_z }
    })
}

/// True when some observation lies below `g(X_i, θ₀)`.
pub(crate) fn covariate_support_violated<M: CovariateModelSpec + ?Sized>(
    model: &M,
    sample: &Sample,
    theta0: f64,
) -> Result<bool> {
    let levels = resolve_levels(model, sample)?;
    Ok(sample
        .values()
        .iter()
        .zip(levels.iter())
        .any(|(&y, &j)| y < model.boundary(j, theta0)))
}
