//! The limit experiment.
//!
//! Per covariate level `j`, `W_{h,j} = G_j·h + λ_j·Exp(1)` independently, and
//! the limiting ratio is `Z(h, h̄) = e^{(h̄−h)/λ}·∏_j 1{W_{h,j} > G_j h̄}` with
//! `λ = (Σ_j G_j/λ_j)^{-1}`. The benchmark model is the case `L = 1`.
//!
//! Everything here is closed form or a draw from the limit, so it doubles
//! as the oracle for the finite-sample tests.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};

use crate::error::{config, Error, Result};
use crate::model::{CovariateModelSpec, ModelSpec};

/// Which alternative a test or envelope targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
    Two,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
            Side::Two => "two",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plus" | "+" => Ok(Side::Plus),
            "minus" | "-" => Ok(Side::Minus),
            "two" | "two-sided" | "both" => Ok(Side::Two),
            other => config(format!("unknown side `{other}` (expected plus, minus or two)")),
        }
    }
}

/// Limit constants of one covariate level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLimit {
    /// `G_j = ∇_θ g(a_j, θ₀)`.
    pub slope: f64,
    /// `λ_j = 1/(Pr{X=a_j}·f(g(a_j,θ₀)|a_j,θ₀,γ))`.
    pub lambda: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitParams {
    pub lambda: f64,
    pub levels: Vec<LevelLimit>,
}

impl LimitParams {
    /// Single unit-slope level with scale `λ`.
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return config(format!("λ must be positive and finite, got {lambda}"));
        }
        Ok(Self {
            lambda,
            levels: vec![LevelLimit {
                slope: 1.0,
                lambda,
                mass: 1.0,
            }],
        })
    }

    /// Assembles `λ = (Σ_j G_j/λ_j)^{-1}`.
    pub fn from_levels(levels: Vec<LevelLimit>) -> Result<Self> {
        if levels.is_empty() {
            return config("at least one level is required");
        }
        if levels.iter().any(|l| !(l.lambda.is_finite() && l.lambda > 0.0)) {
            return Err(Error::DegenerateBoundary("every λ_j must be positive and finite".into()));
        }
        let rate: f64 = levels.iter().map(|l| l.slope / l.lambda).sum();
        if !(rate > 0.0) {
            return Err(Error::DegenerateBoundary(format!("Σ G_j/λ_j = {rate} is not positive")));
        }
        Ok(Self {
            lambda: 1.0 / rate,
            levels,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    fn all_slopes_positive(&self) -> bool {
        self.levels.iter().all(|l| l.slope > 0.0)
    }

    /// `Pr{D_{0,h̄} = 1} = exp(Σ_j min{−G_j h̄, 0}/λ_j)`.
    pub fn prob_d0(&self, hbar: f64) -> f64 {
        self.exp_sum(|l| (-l.slope * hbar).min(0.0))
    }

    fn exp_sum(&self, term: impl Fn(&LevelLimit) -> f64) -> f64 {
        self.levels.iter().map(|l| term(l) / l.lambda).sum::<f64>().exp()
    }
}

/// `λ = 1/(f(g(θ₀)|θ₀)·∇_θ g(θ₀))`.
pub fn lambda_benchmark<M: ModelSpec + ?Sized>(model: &M, theta0: f64) -> Result<LimitParams> {
    let f0 = model.density(model.boundary(theta0), theta0);
    let slope = model.boundary_slope(theta0);
    if !(f0.is_finite() && f0 > 0.0) {
        return Err(Error::DegenerateBoundary(format!("boundary density {f0} at θ = {theta0}")));
    }
    if !(slope.is_finite() && slope > 0.0) {
        return Err(Error::DegenerateBoundary(format!("boundary slope {slope} at θ = {theta0}")));
    }
    Ok(LimitParams {
        lambda: 1.0 / (f0 * slope),
        levels: vec![LevelLimit {
            slope,
            lambda: 1.0 / f0,
            mass: 1.0,
        }],
    })
}

/// Per-level `(G_j, λ_j, mass_j)` at `(θ₀, γ)`.
pub fn lambda_general<M: CovariateModelSpec + ?Sized>(
    model: &M,
    theta0: f64,
    gamma: &[f64],
) -> Result<LimitParams> {
    let levels = model
        .levels()
        .iter()
        .enumerate()
        .map(|(j, lvl)| {
            if !(lvl.mass > 0.0) {
                return config(format!("level {j} has non-positive mass"));
            }
            let f0 = model.density(model.boundary(j, theta0), j, theta0, gamma);
            if !(f0.is_finite() && f0 > 0.0) {
                return Err(Error::DegenerateBoundary(format!("boundary density {f0} at level {j}")));
            }
            Ok(LevelLimit {
                slope: model.boundary_slope(j, theta0),
                lambda: 1.0 / (lvl.mass * f0),
                mass: lvl.mass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LimitParams::from_levels(levels)
}

/// One draw of `(W_{h,1}, …, W_{h,L})`.
pub fn sample_w<R: RngCore + ?Sized>(params: &LimitParams, h: f64, rng: &mut R) -> Vec<f64> {
    params
        .levels
        .iter()
        .map(|l| {
            let e: f64 = Exp1.sample(rng);
            l.slope * h + l.lambda * e
        })
        .collect()
}

fn indicator_d(params: &LimitParams, hbar: f64, w: &[f64]) -> bool {
    params.levels.iter().zip(w).all(|(l, &wj)| wj > l.slope * hbar)
}

fn check_dim(params: &LimitParams, w: &[f64]) -> Result<()> {
    if w.len() != params.levels.len() {
        return Err(Error::InvalidInput(format!(
            "W has {} coordinates, limit has {} levels",
            w.len(),
            params.levels.len()
        )));
    }
    Ok(())
}

/// `Z(h, h̄) = e^{(h̄−h)/λ}·∏_j 1{w_j > G_j h̄}`.
pub fn limit_lr(params: &LimitParams, h: f64, hbar: f64, w: &[f64]) -> Result<f64> {
    check_dim(params, w)?;
    Ok(if indicator_d(params, hbar, w) {
        ((hbar - h) / params.lambda).exp()
    } else {
        0.0
    })
}

/// `Π⁺(h) = min{α e^{h/λ}, 1}`.
pub fn envelope_plus(params: &LimitParams, alpha: f64, h: f64) -> f64 {
    (alpha * (h / params.lambda).exp()).min(1.0)
}

/// `Π⁻(h) = 1 − (1−α) e^{h/λ}`.
pub fn envelope_minus(params: &LimitParams, alpha: f64, h: f64) -> f64 {
    1.0 - (1.0 - alpha) * (h / params.lambda).exp()
}

/// `min{α e^{h/λ}, 1} + 1 − min{e^{h/λ}, 1}`: equal to `Π⁺` for `h ≥ 0` and
/// `Π⁻` for `h ≤ 0`.
pub fn envelope_twosided(params: &LimitParams, alpha: f64, h: f64) -> f64 {
    let e = (h / params.lambda).exp();
    (alpha * e).min(1.0) + 1.0 - e.min(1.0)
}

pub fn envelope(params: &LimitParams, alpha: f64, side: Side, h: f64) -> f64 {
    match side {
        Side::Plus => envelope_plus(params, alpha, h),
        Side::Minus => envelope_minus(params, alpha, h),
        Side::Two => envelope_twosided(params, alpha, h),
    }
}

/// Benchmark power lower bound of the plus-side test built at `h̄`.
pub fn lower_bound_plus_benchmark(lambda: f64, alpha: f64, h: f64, hbar: f64) -> f64 {
    let p = (-hbar / lambda).exp();
    if alpha <= p {
        alpha * (h.min(hbar) / lambda).exp()
    } else {
        let m = ((h - hbar) / lambda).exp().min(1.0);
        (alpha - p) / (1.0 - p) + m * (1.0 - alpha) / (1.0 - p)
    }
}

/// Benchmark power lower bound of the minus-side test built at `h̄ < 0`.
pub fn lower_bound_minus_benchmark(lambda: f64, alpha: f64, h: f64, hbar: f64) -> f64 {
    ((h - hbar) / lambda).exp().min(1.0) - (1.0 - alpha) * (h / lambda).exp()
}

/// Covariate-level power lower bound of the plus-side test, with slopes of
/// either sign.
pub fn lower_bound_plus_general(params: &LimitParams, alpha: f64, h: f64, hbar: f64) -> f64 {
    let big_p = params.prob_d0(hbar);
    let a = params.exp_sum(|l| (l.slope * (h - hbar)).min(0.0));
    let b = params.exp_sum(|l| (l.slope * (h - hbar)).min(l.slope * h).min(0.0));
    if alpha <= big_p {
        let c = params.exp_sum(|l| (l.slope * h).min(l.slope.max(0.0) * hbar));
        a - b + alpha * c
    } else {
        let c = params.exp_sum(|l| (l.slope * h).min(0.0));
        a + (alpha - big_p) / (1.0 - big_p) * (c - b)
    }
}

/// Covariate-level power lower bound of the minus-side test.
pub fn lower_bound_minus_general(params: &LimitParams, alpha: f64, h: f64, hbar: f64) -> f64 {
    let a = params.exp_sum(|l| (l.slope * (h - hbar)).min(0.0));
    let b = params.exp_sum(|l| (l.slope * (h - hbar)).min(l.slope * h).min(0.0));
    let c = params.exp_sum(|l| (l.slope * h).min(l.slope.min(0.0) * hbar));
    a - b + alpha * c
}

/// Simplified form valid when every `G_j > 0`, `h, h̄ > 0`.
fn lower_bound_plus_positive_slopes(params: &LimitParams, alpha: f64, h: f64, hbar: f64) -> f64 {
    lower_bound_plus_benchmark(params.lambda, alpha, h, hbar)
}

/// `π_L(h, h̄)` for the plus side. `L = 1` uses the benchmark expression.
pub fn lower_bound_plus(params: &LimitParams, alpha: f64, h: f64, hbar: f64) -> f64 {
    if params.n_levels() == 1 {
        lower_bound_plus_benchmark(params.lambda, alpha, h, hbar)
    } else if params.all_slopes_positive() && h > 0.0 && hbar > 0.0 {
        lower_bound_plus_positive_slopes(params, alpha, h, hbar)
    } else {
        lower_bound_plus_general(params, alpha, h, hbar)
    }
}

/// `π_L(h, h̄)` for the minus side.
pub fn lower_bound_minus(params: &LimitParams, alpha: f64, h: f64, hbar: f64) -> f64 {
    if params.n_levels() == 1 {
        lower_bound_minus_benchmark(params.lambda, alpha, h, hbar)
    } else {
        lower_bound_minus_general(params, alpha, h, hbar)
    }
}

/// Rejection probability of the limiting Neyman–Pearson test of `h = 0`
/// against `h = h̄` given a realization `w`.
///
/// With `D_0 = ∏1{w_j > 0}`, `D_h̄ = ∏1{w_j > G_j h̄}` and
/// `p = Pr{D_{0,h̄} = 1}`: `D_0 = 0` rejects outright; otherwise when `α ≤ p`
/// the test randomizes with `α/p` on `D_h̄ = 1` and accepts on `D_h̄ = 0`,
/// and when `α > p` it rejects on `D_h̄ = 1` and randomizes with
/// `(α−p)/(1−p)` on `D_h̄ = 0`.
pub fn np_limit_reject_probability(params: &LimitParams, alpha: f64, hbar: f64, w: &[f64]) -> Result<f64> {
    check_dim(params, w)?;
    if !indicator_d(params, 0.0, w) {
        return Ok(1.0);
    }
    let d_hbar = indicator_d(params, hbar, w);
    let p = params.prob_d0(hbar);
    Ok(if alpha <= p {
        if d_hbar {
            (alpha / p).min(1.0)
        } else {
            0.0
        }
    } else if d_hbar {
        1.0
    } else {
        (alpha - p) / (1.0 - p)
    })
}

/// Realized decision of the limiting Neyman–Pearson test. Consumes exactly
/// one uniform from `rng`.
pub fn np_limit_test<R: RngCore + ?Sized>(
    params: &LimitParams,
    alpha: f64,
    hbar: f64,
    w: &[f64],
    rng: &mut R,
) -> Result<bool> {
    let p = np_limit_reject_probability(params, alpha, hbar, w)?;
    let u: f64 = rng.random();
    Ok(u < p)
}

/// One row of an envelope table.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub h: f64,
    pub envelope: f64,
    pub lower_bound: Option<f64>,
    pub branch: &'static str,
}

fn plus_branch(params: &LimitParams, alpha: f64, h: f64) -> &'static str {
    if alpha.ln() <= -h / params.lambda {
        "randomized"
    } else {
        "saturated"
    }
}

/// Envelope (and, given `h̄` of matching sign, the lower bound) on `grid`.
pub fn envelope_rows(
    params: &LimitParams,
    alpha: f64,
    side: Side,
    grid: &[f64],
    hbar: Option<f64>,
) -> Vec<EnvelopeRow> {
    grid.iter()
        .map(|&h| {
            let envelope = envelope(params, alpha, side, h);
            let branch = match side {
                Side::Minus => "minus",
                _ if h < 0.0 => "minus",
                _ => plus_branch(params, alpha, h),
            };
            let lower_bound = hbar.and_then(|hb| match side {
                Side::Plus if h > 0.0 && hb > 0.0 && hb.is_finite() => {
                    Some(lower_bound_plus(params, alpha, h, hb))
                }
                Side::Minus if h < 0.0 && hb < 0.0 && hb.is_finite() => {
                    Some(lower_bound_minus(params, alpha, h, hb))
                }
                _ => None,
            });
            EnvelopeRow {
                h,
                envelope,
                lower_bound,
                branch,
            }
        })
        .collect()
}
