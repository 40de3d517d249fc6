//! Sample splitting and the plug-in estimates used by the covariate tests.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Error, Result};
use crate::limit::{lambda_general, LevelLimit, LimitParams};
use crate::model::{CovariateModelSpec, ModelSpec, Provenance, Sample};
use crate::nlr::{hbar_plus, DEFAULT_TRUNCATION};

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const GAMMA_TOL: f64 = 1e-8;
const THETA_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200;

/// How to divide a sample into a main half and an auxiliary half.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    FirstHalf,
    /// Uniformly random partition driven by the seed.
    Seeded(u64),
}

/// Splits into `(main, aux)` of sizes `⌊n/2⌋` and `⌈n/2⌉`. Both halves carry
/// provenance so that overlap with the main sample can be detected later.
pub fn split_sample(full: &Sample, rule: SplitRule) -> Result<(Sample, Sample)> {
    let n = full.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("cannot split a sample of size {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if let SplitRule::Seeded(seed) = rule {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let (main, aux) = idx.split_at(n / 2);
    Ok((full.subset(main)?, full.subset(aux)?))
}

/// Maximizes a unimodal `f` on `[a, b]`; returns the argmax and its value.
fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn covariate_loglik<M: CovariateModelSpec + ?Sized>(model: &M, sample: &Sample, theta0: f64, gamma: &[f64]) -> f64 {
    let levels = sample.levels().unwrap_or(&[]);
    if levels.is_empty() {
        return sample.values().iter().map(|&y| model.log_density(y, 0, theta0, gamma)).sum();
    }
    sample
        .values()
        .iter()
        .zip(levels)
        .map(|(&y, &j)| model.log_density(y, j, theta0, gamma))
        .sum()
}

/// Maximum-likelihood `γ̌` at `θ₀` by cyclic coordinate golden-section
/// search within the model's bounds.
pub fn estimate_gamma<M: CovariateModelSpec + ?Sized>(model: &M, aux: &Sample, theta0: f64) -> Result<Vec<f64>> {
    if aux.is_empty() {
        return Err(Error::EmptySample);
    }
    let dim = model.gamma_dim();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut gamma: Vec<f64> = (0..dim)
        .map(|k| {
            let (lo, hi) = model.gamma_bounds(k);
            0.5 * (lo + hi)
        })
        .collect();
    let mut last = covariate_loglik(model, aux, theta0, &gamma);
    for _ in 0..MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        for k in 0..dim {
            let (lo, hi) = model.gamma_bounds(k);
            let mut trial = gamma.clone();
            let (best, _) = golden_max(
                |v| {
                    trial[k] = v;
                    covariate_loglik(model, aux, theta0, &trial)
                },
                lo,
                hi,
                GAMMA_TOL * 0.01,
            );
            if best - lo < GAMMA_TOL || hi - best < GAMMA_TOL {
                return Err(Error::Convergence(format!(
                    "γ̌[{k}] = {best} sits on the search bound [{lo}, {hi}]"
                )));
            }
            max_step = max_step.max((best - gamma[k]).abs());
            gamma[k] = best;
        }
        // near the optimum the search resolution is set by rounding in the
        // log-likelihood, so a stalled objective also counts as converged
        let current = covariate_loglik(model, aux, theta0, &gamma);
        if max_step < GAMMA_TOL || current - last <= 1e-12 * (1.0 + current.abs()) {
            return Ok(gamma);
        }
        last = current;
    }
    Err(Error::Convergence(format!("γ̌ still moving after {MAX_SWEEPS} sweeps")))
}

/// `λ̌_j = {n⁻¹ Σ_i 1{X_i = a_j} f(g(a_j,θ₀)|a_j,θ₀,γ̌)}⁻¹`, assembled into
/// `λ̌ = (Σ_j G_j/λ̌_j)⁻¹`. The level frequencies stand in for the masses.
pub fn estimate_lambda_levels<M: CovariateModelSpec + ?Sized>(
    model: &M,
    aux: &Sample,
    theta0: f64,
    gamma_check: &[f64],
) -> Result<LimitParams> {
    let n_levels = model.levels().len();
    let n = aux.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut counts = vec![0usize; n_levels];
    match aux.levels() {
        Some(levels) => {
            for &j in levels {
                if j >= n_levels {
                    return Err(Error::UnknownLevel(j));
                }
                counts[j] += 1;
            }
        }
        None if n_levels == 1 => counts[0] = n,
        None => return Err(Error::InvalidInput("auxiliary sample has no covariate levels".into())),
    }
    let levels = counts
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            if c == 0 {
                return Err(Error::EmptyLevel(j));
            }
            let freq = c as f64 / n as f64;
            let f0 = model.density(model.boundary(j, theta0), j, theta0, gamma_check);
            if !(f0.is_finite() && f0 > 0.0) {
                return Err(Error::DegenerateBoundary(format!("estimated boundary density {f0} at level {j}")));
            }
            Ok(LevelLimit {
                slope: model.boundary_slope(j, theta0),
                lambda: 1.0 / (freq * f0),
                mass: freq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LimitParams::from_levels(levels)
}

/// Which plug-in alternative to select.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HCheckSide {
    /// `ȟ⁺(π) = λ̌ log(π/α)`.
    Plus(f64),
    /// `ȟ⁻ = −M`.
    Minus(f64),
}

pub fn select_h_check(limit: &LimitParams, alpha: f64, side: HCheckSide) -> Result<f64> {
    match side {
        HCheckSide::Plus(pi) => hbar_plus(limit, alpha, pi),
        HCheckSide::Minus(m) => {
            if !(m.is_finite() && m > 0.0) {
                return config(format!("M must be positive and finite, got {m}"));
            }
            Ok(-m)
        }
    }
}

/// Where a set of estimates came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSource {
    pub size: usize,
    pub seed: Option<u64>,
    pub provenance: Option<Provenance>,
}

/// Plug-in quantities for the covariate tests.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    pub gamma_check: Vec<f64>,
    /// `λ̌_j` per level and the assembled `λ̌`.
    pub limit: LimitParams,
    pub h_check_plus: f64,
    pub h_check_minus: f64,
    pub source: EstimateSource,
}

impl NuisanceEstimates {
    /// Estimates from an auxiliary sample, with `ȟ⁺ = −λ̌ log α` and `ȟ⁻ = −M`.
    pub fn from_aux<M: CovariateModelSpec + ?Sized>(
        model: &M,
        aux: &Sample,
        theta0: f64,
        alpha: f64,
        truncation: f64,
    ) -> Result<Self> {
        let gamma_check = estimate_gamma(model, aux, theta0)?;
        let limit = estimate_lambda_levels(model, aux, theta0, &gamma_check)?;
        Ok(Self {
            h_check_plus: select_h_check(&limit, alpha, HCheckSide::Plus(1.0))?,
            h_check_minus: select_h_check(&limit, alpha, HCheckSide::Minus(truncation))?,
            gamma_check,
            limit,
            source: EstimateSource {
                size: aux.len(),
                seed: None,
                provenance: aux.provenance().cloned(),
            },
        })
    }

    /// Exact quantities at a known `γ`, with population masses.
    pub fn known<M: CovariateModelSpec + ?Sized>(model: &M, theta0: f64, gamma: &[f64], alpha: f64) -> Result<Self> {
        let limit = lambda_general(model, theta0, gamma)?;
        Ok(Self {
            h_check_plus: select_h_check(&limit, alpha, HCheckSide::Plus(1.0))?,
            h_check_minus: -DEFAULT_TRUNCATION,
            gamma_check: gamma.to_vec(),
            limit,
            source: EstimateSource {
                size: 0,
                seed: None,
                provenance: None,
            },
        })
    }

    pub fn lambda_check(&self) -> f64 {
        self.limit.lambda
    }

    pub fn lambda_check_levels(&self) -> Vec<f64> {
        self.limit.levels.iter().map(|l| l.lambda).collect()
    }
}

/// Splits `full`, estimates on the auxiliary half and returns the main half
/// with the estimates.
pub fn split_and_estimate<M: CovariateModelSpec + ?Sized>(
    model: &M,
    full: &Sample,
    theta0: f64,
    rule: SplitRule,
    alpha: f64,
    truncation: f64,
) -> Result<(Sample, NuisanceEstimates)> {
    let (main, aux) = split_sample(full, rule)?;
    let mut est = NuisanceEstimates::from_aux(model, &aux, theta0, alpha, truncation)?;
    if let SplitRule::Seeded(seed) = rule {
        est.source.seed = Some(seed);
    }
    Ok((main, est))
}

fn loglik<M: ModelSpec + ?Sized>(model: &M, sample: &Sample, theta: f64) -> f64 {
    sample.values().iter().map(|&y| model.log_density(y, theta)).sum()
}

/// Maximum-likelihood `θ̂` over `{θ : g(θ) ≤ Y_(1)}`.
///
/// Golden-section search on `[θ_max − 10, θ_max]` with the bracket widened
/// while the maximum sits on its lower edge, followed by a comparison with
/// the boundary point `θ_max` itself. On ties the boundary point wins.
pub fn mle_theta<M: ModelSpec + ?Sized>(model: &M, sample: &Sample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let theta_max = model.boundary_inverse(sample.min_y());
    let domain = model.theta_domain();
    let theta_max = theta_max.min(domain.hi);
    let mut width = 10.0;
    for _ in 0..30 {
        let lo = (theta_max - width).max(domain.lo);
        // outside the support the log-likelihood is -inf everywhere, so slope
        // it towards θ_max to keep the search moving right
        let objective = |t: f64| {
            let l = loglik(model, sample, t);
            if l.is_finite() {
                l
            } else {
                -1e290 * (1.0 + (theta_max - t).min(1e15))
            }
        };
        let (x, fx) = golden_max(objective, lo, theta_max, THETA_TOL);
        if x - lo > 4.0 * THETA_TOL || lo <= domain.lo {
            let at_edge = loglik(model, sample, theta_max);
            return Ok(if at_edge >= fx || !fx.is_finite() { theta_max } else { x });
        }
        width *= 4.0;
    }
    Err(Error::Convergence("likelihood keeps increasing as θ decreases".into()))
}
