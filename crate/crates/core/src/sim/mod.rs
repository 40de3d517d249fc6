//! Reproducible Monte Carlo power studies.
//!
//! Replication `r` at grid index `i` draws from its own ChaCha8 stream,
//! `seed_from_u64(master_seed)` with stream id `(i << 32) | r`. Replications
//! run on a rayon pool, results are collected in index order and summed
//! sequentially, so the output does not depend on the thread count.

mod config;
mod csv;
mod presets;

pub use config::{parse_config, parse_h_grid, scenario_from_pairs};
pub use csv::{
    emit_comparison_csv, emit_csv, emit_envelope_csv, format_g, write_gnuplot, PlotKind, COMPARISON_HEADER,
    ENVELOPE_HEADER, POWER_HEADER,
};
pub use presets::{preset, preset_names, PresetRun};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{config as config_err, Error, Result};
use crate::estimate::{split_and_estimate, NuisanceEstimates, SplitRule};
use crate::limit::{
    envelope, lambda_benchmark, lambda_general, lower_bound_minus, lower_bound_plus, LimitParams, Side,
};
use crate::model::{draw_covariate_sample, draw_sample, AnyModel, CovariateModelSpec, ModelSpec};
use crate::nlr::{
    resolve_hbar_minus, resolve_hbar_plus, test_minus, test_minus_general, test_plus, test_plus_general,
    test_twosided, test_twosided_general, Hbar, HbarPolicy, Randomization, TestConfig, TestOutcome,
    DEFAULT_EPSILON_MINUS, DEFAULT_EPSILON_PLUS, DEFAULT_EPSILON_TWO, DEFAULT_TRUNCATION,
};
use crate::wald::{wald_test, WaldConfig};

/// Where the covariate tests get their plug-in quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorPolicy {
    /// Population `γ` and masses.
    KnownNuisance,
    /// Draw `2n` observations; estimate on the second half, test on the first.
    SplitSample,
}

impl fmt::Display for EstimatorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorPolicy::KnownNuisance => "known",
            EstimatorPolicy::SplitSample => "split",
        })
    }
}

impl FromStr for EstimatorPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "known" | "known-nuisance" => Ok(EstimatorPolicy::KnownNuisance),
            "split" | "split-sample" => Ok(EstimatorPolicy::SplitSample),
            other => config_err(format!("unknown estimator policy `{other}` (expected known or split)")),
        }
    }
}

/// How per-replication outcomes are turned into a rejection rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Mean reported rejection probability.
    Probability,
    /// Mean of realized coin flips.
    Coin,
}

impl Aggregation {
    pub fn describe(&self) -> &'static str {
        match self {
            Aggregation::Probability => "mean rejection probability (randomization integrated out)",
            Aggregation::Coin => "mean of realized coin flips",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Probability => "probability",
            Aggregation::Coin => "coin",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "probability" | "prob" => Ok(Aggregation::Probability),
            "coin" => Ok(Aggregation::Coin),
            other => config_err(format!("unknown aggregation `{other}` (expected probability or coin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model_id: String,
    pub theta0: f64,
    pub side: Side,
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub epsilon2: Option<f64>,
    pub epsilon3: Option<f64>,
    pub hbar_policy: HbarPolicy,
    pub truncation: f64,
    pub n: usize,
    /// True local parameters.
    pub h_grid: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    pub estimator_policy: EstimatorPolicy,
    pub aggregation: Aggregation,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            model_id: "halfnormal".into(),
            theta0: 0.0,
            side: Side::Plus,
            alpha: 0.05,
            epsilon: None,
            epsilon2: None,
            epsilon3: None,
            hbar_policy: HbarPolicy::Optimal,
            truncation: DEFAULT_TRUNCATION,
            n: 200,
            h_grid: (0..=10).map(|i| i as f64 * 0.5).collect(),
            replications: 2000,
            master_seed: 0,
            estimator_policy: EstimatorPolicy::KnownNuisance,
            aggregation: Aggregation::Probability,
        }
    }
}

impl Scenario {
    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            epsilon2: self.epsilon2,
            epsilon3: self.epsilon3,
            hbar_policy: self.hbar_policy,
            truncation: self.truncation,
            randomization: match self.aggregation {
                Aggregation::Probability => Randomization::ReportProbability,
                Aggregation::Coin => Randomization::CoinFlip,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.test_config().validate()?;
        AnyModel::from_id(&self.model_id)?;
        if self.n == 0 {
            return config_err("n must be at least 1");
        }
        if self.replications == 0 {
            return config_err("replications must be at least 1");
        }
        if self.h_grid.is_empty() {
            return config_err("h_grid is empty");
        }
        if let Some(h) = self.h_grid.iter().find(|h| !h.is_finite()) {
            return config_err(format!("h_grid contains {h}"));
        }
        match self.side {
            Side::Plus if self.h_grid.iter().any(|&h| h < 0.0) => {
                config_err("side = plus needs a nonnegative h_grid")
            }
            Side::Minus if self.h_grid.iter().any(|&h| h > 0.0) => {
                config_err("side = minus needs a nonpositive h_grid")
            }
            _ => Ok(()),
        }
    }

    /// Population limit constants of the scenario's model at `θ₀`.
    pub fn limit_params(&self) -> Result<LimitParams> {
        match AnyModel::from_id(&self.model_id)? {
            AnyModel::Benchmark(m) => lambda_benchmark(&*m, self.theta0),
            AnyModel::Covariate(m) => lambda_general(&*m, self.theta0, &m.default_gamma()),
        }
    }

    /// The alternative the test is built at, with population constants.
    pub fn resolved_hbar(&self) -> Result<Hbar> {
        let params = self.limit_params()?;
        let covariate = matches!(AnyModel::from_id(&self.model_id)?, AnyModel::Covariate(_));
        match self.side {
            Side::Plus => Ok(Hbar::Finite(resolve_hbar_plus(&params, self.alpha, self.hbar_policy)?)),
            Side::Minus => {
                let policy = match (covariate, self.hbar_policy) {
                    (true, HbarPolicy::Optimal) => HbarPolicy::Truncated,
                    (_, p) => p,
                };
                resolve_hbar_minus(&params, self.alpha, policy, self.truncation)
            }
            Side::Two => Ok(Hbar::Finite(-params.lambda * self.alpha.ln())),
        }
    }

    /// The `ε` the test will use, after defaults; `None` when the test has
    /// no tuning constant.
    pub fn effective_epsilon(&self) -> Result<Option<f64>> {
        let hbar = self.resolved_hbar()?;
        let params = self.limit_params()?;
        let covariate = matches!(AnyModel::from_id(&self.model_id)?, AnyModel::Covariate(_));
        Ok(match (self.side, hbar) {
            (Side::Plus, Hbar::Finite(h)) => {
                let p = params.prob_d0(h);
                if self.alpha.ln() <= p.ln() + 1e-10 {
                    Some(self.epsilon.unwrap_or(DEFAULT_EPSILON_PLUS))
                } else if covariate {
                    Some(self.epsilon2.unwrap_or(0.01 * p))
                } else {
                    Some(self.epsilon.unwrap_or(0.01 * p))
                }
            }
            (Side::Minus, Hbar::NegInfinity) => None,
            (Side::Minus, _) => Some(self.epsilon.unwrap_or(DEFAULT_EPSILON_MINUS)),
            (Side::Two, _) => Some(self.epsilon.unwrap_or(DEFAULT_EPSILON_TWO)),
            (Side::Plus, Hbar::NegInfinity) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerPoint {
    pub h: f64,
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub envelope: f64,
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerStudy {
    pub scenario: Scenario,
    pub points: Vec<PowerPoint>,
    pub hbar: Hbar,
    pub lambda: f64,
    pub version: &'static str,
}

impl PowerStudy {
    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rejection_rate).collect()
    }

    /// `max_h |Π(h) − rate(h)|`.
    pub fn sup_gap(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.envelope - p.rejection_rate).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonPoint {
    pub h: f64,
    pub nlr_rate: f64,
    pub nlr_se: f64,
    pub wald_rate: f64,
    pub wald_se: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonStudy {
    pub scenario: Scenario,
    pub points: Vec<ComparisonPoint>,
    pub hbar: f64,
    pub lambda: f64,
    pub version: &'static str,
}

/// RNG for replication `rep` at grid index `h_index`.
pub fn replication_rng(master_seed: u64, h_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(h_index, rep));
    rng
}

fn stream_id(h_index: usize, rep: usize) -> u64 {
    debug_assert!(rep < (1 << 32) && h_index < (1 << 32));
    ((h_index as u64) << 32) | rep as u64
}

/// Records every stream handed out during one run and panics on reuse.
#[cfg(debug_assertions)]
struct SeedLedger(std::sync::Mutex<std::collections::HashSet<u64>>);

#[cfg(debug_assertions)]
impl SeedLedger {
    fn new() -> Self {
        Self(std::sync::Mutex::new(std::collections::HashSet::new()))
    }

    fn claim(&self, h_index: usize, rep: usize) {
        let fresh = self.0.lock().expect("seed ledger poisoned").insert(stream_id(h_index, rep));
        assert!(fresh, "RNG stream ({h_index}, {rep}) handed out twice");
    }
}

#[cfg(not(debug_assertions))]
struct SeedLedger;

#[cfg(not(debug_assertions))]
impl SeedLedger {
    fn new() -> Self {
        SeedLedger
    }

    fn claim(&self, _h_index: usize, _rep: usize) {}
}

/// Thread cap from `NLR_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("NLR_THREADS").ok()?.trim().parse().ok().filter(|&t| t > 0)
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `task(h_index, rep)` over the whole grid and returns the values
/// grouped per grid point, in replication order.
fn run_grid<T, F>(grid_len: usize, reps: usize, threads: Option<usize>, task: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T> + Sync + Send,
{
    let ledger = SeedLedger::new();
    let flat: Vec<T> = with_pool(threads, || {
        (0..grid_len * reps)
            .into_par_iter()
            .map(|k| {
                let (i, r) = (k / reps, k % reps);
                ledger.claim(i, r);
                task(i, r)
            })
            .collect::<Result<Vec<T>>>()
    })??;
    let mut out = Vec::with_capacity(grid_len);
    let mut it = flat.into_iter();
    for _ in 0..grid_len {
        out.push(it.by_ref().take(reps).collect());
    }
    Ok(out)
}

/// Mean and standard error of the mean, summed in index order. For 0/1
/// values the standard error is `sqrt(r(1−r)/R)`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let second = values.iter().map(|v| v * v).sum::<f64>() / r;
    let var = (second - mean * mean).max(0.0);
    (mean, (var / r).sqrt())
}

enum Resolved {
    Benchmark(Arc<dyn ModelSpec>),
    Covariate(Arc<dyn CovariateModelSpec>, Vec<f64>),
}

fn outcome_value(out: &TestOutcome, aggregation: Aggregation) -> f64 {
    match aggregation {
        Aggregation::Probability => out.reject_probability,
        Aggregation::Coin => {
            if out.rejected() {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn one_replication(
    model: &Resolved,
    scenario: &Scenario,
    cfg: &TestConfig,
    known: Option<&NuisanceEstimates>,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TestOutcome> {
    let theta = scenario.theta0 + h / scenario.n as f64;
    match model {
        Resolved::Benchmark(m) => {
            let s = draw_sample(&**m, theta, scenario.n, rng)?;
            match scenario.side {
                Side::Plus => test_plus(&**m, &s, scenario.theta0, cfg, rng),
                Side::Minus => test_minus(&**m, &s, scenario.theta0, cfg, rng),
                Side::Two => test_twosided(&**m, &s, scenario.theta0, cfg, rng),
            }
        }
        Resolved::Covariate(m, gamma) => {
            let (main, est) = match known {
                Some(est) => (draw_covariate_sample(&**m, theta, gamma, scenario.n, rng)?, est.clone()),
                None => {
                    let full = draw_covariate_sample(&**m, theta, gamma, 2 * scenario.n, rng)?;
                    split_and_estimate(
                        &**m,
                        &full,
                        scenario.theta0,
                        SplitRule::FirstHalf,
                        scenario.alpha,
                        scenario.truncation,
                    )?
                }
            };
            match scenario.side {
                Side::Plus => test_plus_general(&**m, &main, scenario.theta0, &est, cfg, rng),
                Side::Minus => test_minus_general(&**m, &main, scenario.theta0, &est, cfg, rng),
                Side::Two => test_twosided_general(&**m, &main, scenario.theta0, &est, cfg, rng),
            }
        }
    }
}

fn resolve_model(scenario: &Scenario) -> Result<(Resolved, Option<NuisanceEstimates>)> {
    Ok(match AnyModel::from_id(&scenario.model_id)? {
        AnyModel::Benchmark(m) => (Resolved::Benchmark(m), None),
        AnyModel::Covariate(m) => {
            let gamma = m.default_gamma();
            let known = match scenario.estimator_policy {
                EstimatorPolicy::KnownNuisance => {
                    Some(NuisanceEstimates::known(&*m, scenario.theta0, &gamma, scenario.alpha)?)
                }
                EstimatorPolicy::SplitSample => None,
            };
            (Resolved::Covariate(m, gamma), known)
        }
    })
}

fn lower_bound_at(params: &LimitParams, scenario: &Scenario, hbar: Hbar, h: f64) -> Option<f64> {
    match (scenario.side, hbar) {
        (Side::Plus, Hbar::Finite(hb)) if h > 0.0 => Some(lower_bound_plus(params, scenario.alpha, h, hb)),
        (Side::Minus, Hbar::Finite(hb)) if h < 0.0 => Some(lower_bound_minus(params, scenario.alpha, h, hb)),
        _ => None,
    }
}

/// Power curve with thread count from `NLR_THREADS`.
pub fn run_power_study(scenario: &Scenario) -> Result<PowerStudy> {
    run_power_study_with_threads(scenario, threads_from_env())
}

pub fn run_power_study_with_threads(scenario: &Scenario, threads: Option<usize>) -> Result<PowerStudy> {
    scenario.validate()?;
    let params = scenario.limit_params()?;
    let hbar = scenario.resolved_hbar()?;
    scenario.effective_epsilon()?;
    let (model, known) = resolve_model(scenario)?;
    let cfg = scenario.test_config();

    let values = run_grid(scenario.h_grid.len(), scenario.replications, threads, |i, r| {
        let mut rng = replication_rng(scenario.master_seed, i, r);
        let out = one_replication(&model, scenario, &cfg, known.as_ref(), scenario.h_grid[i], &mut rng)?;
        Ok(outcome_value(&out, scenario.aggregation))
    })?;

    let points = scenario
        .h_grid
        .iter()
        .zip(values)
        .map(|(&h, v)| {
            let (rate, se) = mean_and_se(&v);
            PowerPoint {
                h,
                rejection_rate: rate,
                mc_se: se,
                envelope: envelope(&params, scenario.alpha, scenario.side, h),
                lower_bound: lower_bound_at(&params, scenario, hbar, h),
            }
        })
        .collect();
    Ok(PowerStudy {
        scenario: scenario.clone(),
        points,
        hbar,
        lambda: params.lambda,
        version: crate::VERSION,
    })
}

/// NLR and Wald on identical samples (common random numbers). Plus side,
/// benchmark families only.
pub fn run_comparison(scenario: &Scenario) -> Result<ComparisonStudy> {
    run_comparison_with_threads(scenario, threads_from_env())
}

pub fn run_comparison_with_threads(scenario: &Scenario, threads: Option<usize>) -> Result<ComparisonStudy> {
    scenario.validate()?;
    if scenario.side != Side::Plus {
        return config_err("the Wald comparison is defined for side = plus only");
    }
    let model = match AnyModel::from_id(&scenario.model_id)? {
        AnyModel::Benchmark(m) => m,
        AnyModel::Covariate(_) => return config_err("the Wald comparison needs a benchmark model"),
    };
    let params = lambda_benchmark(&*model, scenario.theta0)?;
    let hbar = resolve_hbar_plus(&params, scenario.alpha, scenario.hbar_policy)?;
    let cfg = scenario.test_config();
    let wald_cfg = WaldConfig::new(scenario.alpha, scenario.theta0);

    let values = run_grid(scenario.h_grid.len(), scenario.replications, threads, |i, r| {
        let mut rng = replication_rng(scenario.master_seed, i, r);
        let theta = scenario.theta0 + scenario.h_grid[i] / scenario.n as f64;
        let s = draw_sample(&*model, theta, scenario.n, &mut rng)?;
        let nlr = test_plus(&*model, &s, scenario.theta0, &cfg, &mut rng)?;
        let wald = wald_test(&*model, &s, &wald_cfg)?;
        Ok((outcome_value(&nlr, scenario.aggregation), wald.reject_probability))
    })?;

    let points = scenario
        .h_grid
        .iter()
        .zip(values)
        .map(|(&h, v)| {
            let (nlr, wald): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let (nlr_rate, nlr_se) = mean_and_se(&nlr);
            let (wald_rate, wald_se) = mean_and_se(&wald);
            ComparisonPoint {
                h,
                nlr_rate,
                nlr_se,
                wald_rate,
                wald_se,
                envelope: envelope(&params, scenario.alpha, Side::Plus, h),
            }
        })
        .collect();
    Ok(ComparisonStudy {
        scenario: scenario.clone(),
        points,
        hbar,
        lambda: params.lambda,
        version: crate::VERSION,
    })
}

/// Power of the split-sample covariate plus-side test at its own estimated
/// alternative: each replication estimates `ȟ⁺` from an auxiliary sample
/// drawn under `θ₀`, then tests a main sample drawn at `θ₀ + ȟ⁺/n`.
/// Returns `(rate, mc_se)`.
pub fn tangency_power(scenario: &Scenario, threads: Option<usize>) -> Result<(f64, f64)> {
    scenario.validate()?;
    let model = match AnyModel::from_id(&scenario.model_id)? {
        AnyModel::Covariate(m) => m,
        AnyModel::Benchmark(_) => return config_err("tangency power is defined for covariate models"),
    };
    let gamma = model.default_gamma();
    let cfg = scenario.test_config();
    let values = run_grid(1, scenario.replications, threads, |_, r| {
        let mut rng = replication_rng(scenario.master_seed, 0, r);
        let aux = draw_covariate_sample(&*model, scenario.theta0, &gamma, scenario.n, &mut rng)?;
        let est = NuisanceEstimates::from_aux(&*model, &aux, scenario.theta0, scenario.alpha, scenario.truncation)?;
        let h = resolve_hbar_plus(&est.limit, scenario.alpha, scenario.hbar_policy)?;
        let theta = scenario.theta0 + h / scenario.n as f64;
        let main = draw_covariate_sample(&*model, theta, &gamma, scenario.n, &mut rng)?;
        let out = test_plus_general(&*model, &main, scenario.theta0, &est, &cfg, &mut rng)?;
        Ok(outcome_value(&out, scenario.aggregation))
    })?;
    Ok(mean_and_se(&values[0]))
}
