//! Nonregular parametric families with parameter-dependent support.
//!
//! A benchmark family is `Y ~ f(y|θ)·1{y ≥ g(θ)}` with a scalar parameter.
//! The covariate extension conditions on a discrete `X ∈ {a_1, …, a_L}` and
//! carries a regular nuisance vector `γ`:
//! `Y | X = a_j ~ f(y|a_j,θ,γ)·1{y ≥ g(a_j,θ)}`.
//!
//! `density` returns the factor `f` only. Whether `y` lies in the support is
//! decided by the caller (see [`crate::lratio`]), which is where the `0/0`
//! conventions live.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{config, Error, Result};
use crate::special::{ln_normal_pdf, normal_cdf, normal_pdf, normal_sf};

/// Closed parameter interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// A scalar-parameter family `f(y|θ)·1{y ≥ g(θ)}`.
pub trait ModelSpec: fmt::Debug + Send + Sync {
    /// Registry id, e.g. `"offset-truncnormal:1.25"`.
    fn id(&self) -> String;

    /// Density factor `f(y|θ)`. Only contracted on `y ≥ g(θ)`.
    fn density(&self, y: f64, theta: f64) -> f64;

    fn log_density(&self, y: f64, theta: f64) -> f64 {
        self.density(y, theta).ln()
    }

    /// Support boundary `g(θ)`.
    fn boundary(&self, theta: f64) -> f64;

    /// `∇_θ g(θ)`.
    fn boundary_slope(&self, theta: f64) -> f64;

    /// Largest `θ` with `g(θ) ≤ y`. The default runs Newton steps on `g`
    /// using the analytic slope, which suffices for smooth increasing `g`.
    fn boundary_inverse(&self, y: f64) -> f64 {
        let mut theta = y;
        for _ in 0..100 {
            let step = (self.boundary(theta) - y) / self.boundary_slope(theta);
            theta -= step;
            if step.abs() <= 1e-15 * (1.0 + theta.abs()) {
                break;
            }
        }
        while self.boundary(theta) > y {
            theta = next_down(theta);
        }
        theta
    }

    /// One draw from `f(y|θ)·1{y ≥ g(θ)}`.
    fn sample_one(&self, theta: f64, rng: &mut dyn RngCore) -> f64;

    fn theta_domain(&self) -> Interval {
        Interval::REAL_LINE
    }

    /// `Some(f(y|θ))` when `y ≥ g(θ)`, `None` outside the support.
    fn support_density(&self, y: f64, theta: f64) -> Option<f64> {
        (y >= self.boundary(theta)).then(|| self.density(y, theta))
    }
}

/// `f(y|θ) = 2φ(y−θ)` on `[θ, ∞)`; the half-normal shifted by `θ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfNormalShift;

impl ModelSpec for HalfNormalShift {
    fn id(&self) -> String {
        "halfnormal".into()
    }

    fn density(&self, y: f64, theta: f64) -> f64 {
        2.0 * normal_pdf(y - theta)
    }

    fn log_density(&self, y: f64, theta: f64) -> f64 {
        std::f64::consts::LN_2 + ln_normal_pdf(y - theta)
    }

    fn boundary(&self, theta: f64) -> f64 {
        theta
    }

    fn boundary_slope(&self, _theta: f64) -> f64 {
        1.0
    }

    fn boundary_inverse(&self, y: f64) -> f64 {
        y
    }

    fn sample_one(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta + z.abs()
    }
}

/// `N(θ, 1)` restricted to `[θ − offset, ∞)`.
#[derive(Debug, Clone, Copy)]
pub struct OffsetTruncNormal {
    offset: f64,
    ln_norm: f64,
}

impl OffsetTruncNormal {
    pub fn new(offset: f64) -> Result<Self> {
        if !(offset.is_finite() && offset > 0.0) {
            return config(format!("truncation offset must be positive, got {offset}"));
        }
        Ok(Self {
            offset,
            ln_norm: normal_cdf(offset).ln(),
        })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

impl ModelSpec for OffsetTruncNormal {
    fn id(&self) -> String {
        format!("offset-truncnormal:{}", self.offset)
    }

    fn density(&self, y: f64, theta: f64) -> f64 {
        self.log_density(y, theta).exp()
    }

    fn log_density(&self, y: f64, theta: f64) -> f64 {
        ln_normal_pdf(y - theta) - self.ln_norm
    }

    fn boundary(&self, theta: f64) -> f64 {
        theta - self.offset
    }

    fn boundary_slope(&self, _theta: f64) -> f64 {
        1.0
    }

    fn boundary_inverse(&self, y: f64) -> f64 {
        let theta = y + self.offset;
        if theta - self.offset > y {
            next_down(theta)
        } else {
            theta
        }
    }

    fn sample_one(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        // acceptance probability is Φ(offset)
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= -self.offset {
                return theta + z;
            }
        }
    }
}

/// `U(θ, θ+1)`. The factor is `1` up to `θ+1` and `0` beyond it.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformShift;

impl ModelSpec for UniformShift {
    fn id(&self) -> String {
        "uniform".into()
    }

    fn density(&self, y: f64, theta: f64) -> f64 {
        if y <= theta + 1.0 {
            1.0
        } else {
            0.0
        }
    }

    fn boundary(&self, theta: f64) -> f64 {
        theta
    }

    fn boundary_slope(&self, _theta: f64) -> f64 {
        1.0
    }

    fn boundary_inverse(&self, y: f64) -> f64 {
        y
    }

    fn sample_one(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        theta + rng.random::<f64>()
    }
}

/// One support point `a_j` of the covariate with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateLevel {
    pub value: f64,
    pub mass: f64,
}

/// Family conditioned on a discrete covariate, with nuisance vector `γ`.
/// Levels are addressed by index `0..L`.
pub trait CovariateModelSpec: fmt::Debug + Send + Sync {
    fn id(&self) -> String;

    fn levels(&self) -> &[CovariateLevel];

    fn gamma_dim(&self) -> usize;

    /// Search interval for coordinate `k` of `γ` used by the MLE.
    fn gamma_bounds(&self, k: usize) -> (f64, f64);

    /// Data-generating `γ` for the builtin families.
    fn default_gamma(&self) -> Vec<f64>;

    fn density(&self, y: f64, level: usize, theta: f64, gamma: &[f64]) -> f64;

    fn log_density(&self, y: f64, level: usize, theta: f64, gamma: &[f64]) -> f64 {
        self.density(y, level, theta, gamma).ln()
    }

    /// `g(a_j, θ)`.
    fn boundary(&self, level: usize, theta: f64) -> f64;

    /// `∇_θ g(a_j, θ)`; evaluated at `θ₀` this is `G_j`.
    fn boundary_slope(&self, level: usize, theta: f64) -> f64;

    /// One `(y, level)` draw.
    fn sample_one(&self, theta: f64, gamma: &[f64], rng: &mut dyn RngCore) -> (f64, usize);

    fn theta_domain(&self) -> Interval {
        Interval::REAL_LINE
    }
}

fn validate_levels(levels: &[CovariateLevel]) -> Result<()> {
    if levels.is_empty() {
        return config("a covariate model needs at least one level");
    }
    if levels.iter().any(|l| !(l.mass > 0.0 && l.mass <= 1.0)) {
        return config("covariate masses must lie in (0, 1]");
    }
    let total: f64 = levels.iter().map(|l| l.mass).sum();
    if (total - 1.0).abs() > 1e-12 {
        return config(format!("covariate masses sum to {total}, not 1"));
    }
    Ok(())
}

fn draw_level(levels: &[CovariateLevel], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, l) in levels.iter().enumerate() {
        acc += l.mass;
        if u < acc {
            return j;
        }
    }
    levels.len() - 1
}

/// Per-level shifted exponential: `Y | X=a_j` has density
/// `γ_j·exp(−γ_j (y − G_j θ))` on `[G_j θ, ∞)`. `γ_j` is the rate.
#[derive(Debug, Clone)]
pub struct ShiftedExponentialLevels {
    levels: Vec<CovariateLevel>,
    slopes: Vec<f64>,
    rates: Vec<f64>,
}

impl ShiftedExponentialLevels {
    pub fn new(levels: Vec<CovariateLevel>, slopes: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        validate_levels(&levels)?;
        if slopes.len() != levels.len() || rates.len() != levels.len() {
            return config("slopes and rates must have one entry per level");
        }
        if rates.iter().any(|r| !(*r > 0.0)) {
            return config("exponential rates must be positive");
        }
        Ok(Self {
            levels,
            slopes,
            rates,
        })
    }

    /// Two equally likely levels with `G = (1, 1)` and boundary densities
    /// `(0.5, 0.25)`, so `λ_j = (4, 8)` and `λ = 8/3`.
    pub fn toy() -> Self {
        Self::new(
            vec![
                CovariateLevel { value: 0.0, mass: 0.5 },
                CovariateLevel { value: 1.0, mass: 0.5 },
            ],
            vec![1.0, 1.0],
            vec![0.5, 0.25],
        )
        .expect("toy model is valid")
    }
}

impl CovariateModelSpec for ShiftedExponentialLevels {
    fn id(&self) -> String {
        "toy-exp2".into()
    }

    fn levels(&self) -> &[CovariateLevel] {
        &self.levels
    }

    fn gamma_dim(&self) -> usize {
        self.levels.len()
    }

    fn gamma_bounds(&self, _k: usize) -> (f64, f64) {
        (1e-4, 1e2)
    }

    fn default_gamma(&self) -> Vec<f64> {
        self.rates.clone()
    }

    fn density(&self, y: f64, level: usize, theta: f64, gamma: &[f64]) -> f64 {
        self.log_density(y, level, theta, gamma).exp()
    }

    fn log_density(&self, y: f64, level: usize, theta: f64, gamma: &[f64]) -> f64 {
        let rate = gamma[level];
        rate.ln() - rate * (y - self.boundary(level, theta))
    }

    fn boundary(&self, level: usize, theta: f64) -> f64 {
        self.slopes[level] * theta
    }

    fn boundary_slope(&self, level: usize, _theta: f64) -> f64 {
        self.slopes[level]
    }

    fn sample_one(&self, theta: f64, gamma: &[f64], rng: &mut dyn RngCore) -> (f64, usize) {
        let j = draw_level(&self.levels, rng);
        let e: f64 = Exp1.sample(rng);
        (self.boundary(j, theta) + e / gamma[j], j)
    }
}

/// Per-level truncated normal with unknown location: `Y | X=a_j` is
/// `N(γ_j, 1)` restricted to `[θ + a_j, ∞)`.
#[derive(Debug, Clone)]
pub struct TruncNormalLevels {
    levels: Vec<CovariateLevel>,
    locations: Vec<f64>,
}

impl TruncNormalLevels {
    pub fn new(levels: Vec<CovariateLevel>, locations: Vec<f64>) -> Result<Self> {
        validate_levels(&levels)?;
        if locations.len() != levels.len() {
            return config("one location per level is required");
        }
        Ok(Self { levels, locations })
    }

    pub fn toy() -> Self {
        Self::new(
            vec![
                CovariateLevel { value: 0.0, mass: 0.4 },
                CovariateLevel { value: 0.5, mass: 0.6 },
            ],
            vec![0.5, 1.0],
        )
        .expect("toy model is valid")
    }
}

impl CovariateModelSpec for TruncNormalLevels {
    fn id(&self) -> String {
        "toy-truncnorm2".into()
    }

    fn levels(&self) -> &[CovariateLevel] {
        &self.levels
    }

    fn gamma_dim(&self) -> usize {
        self.levels.len()
    }

    fn gamma_bounds(&self, _k: usize) -> (f64, f64) {
        (-10.0, 10.0)
    }

    fn default_gamma(&self) -> Vec<f64> {
        self.locations.clone()
    }

    fn density(&self, y: f64, level: usize, theta: f64, gamma: &[f64]) -> f64 {
        self.log_density(y, level, theta, gamma).exp()
    }

    fn log_density(&self, y: f64, level: usize, theta: f64, gamma: &[f64]) -> f64 {
        let mu = gamma[level];
        ln_normal_pdf(y - mu) - normal_sf(self.boundary(level, theta) - mu).ln()
    }

    fn boundary(&self, level: usize, theta: f64) -> f64 {
        theta + self.levels[level].value
    }

    fn boundary_slope(&self, _level: usize, _theta: f64) -> f64 {
        1.0
    }

    fn sample_one(&self, theta: f64, gamma: &[f64], rng: &mut dyn RngCore) -> (f64, usize) {
        let j = draw_level(&self.levels, rng);
        let lower = self.boundary(j, theta);
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let y = gamma[j] + z;
            if y >= lower {
                return (y, j);
            }
        }
    }
}

/// A benchmark family viewed as a one-level covariate family with no
/// nuisance parameter.
#[derive(Debug, Clone)]
pub struct SingleLevel<M> {
    inner: M,
    levels: [CovariateLevel; 1],
}

impl<M: ModelSpec> SingleLevel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            levels: [CovariateLevel { value: 0.0, mass: 1.0 }],
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ModelSpec> CovariateModelSpec for SingleLevel<M> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn levels(&self) -> &[CovariateLevel] {
        &self.levels
    }

    fn gamma_dim(&self) -> usize {
        0
    }

    fn gamma_bounds(&self, _k: usize) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn default_gamma(&self) -> Vec<f64> {
        Vec::new()
    }

    fn density(&self, y: f64, _level: usize, theta: f64, _gamma: &[f64]) -> f64 {
        self.inner.density(y, theta)
    }

    fn log_density(&self, y: f64, _level: usize, theta: f64, _gamma: &[f64]) -> f64 {
        self.inner.log_density(y, theta)
    }

    fn boundary(&self, _level: usize, theta: f64) -> f64 {
        self.inner.boundary(theta)
    }

    fn boundary_slope(&self, _level: usize, theta: f64) -> f64 {
        self.inner.boundary_slope(theta)
    }

    fn sample_one(&self, theta: f64, _gamma: &[f64], rng: &mut dyn RngCore) -> (f64, usize) {
        (self.inner.sample_one(theta, rng), 0)
    }

    fn theta_domain(&self) -> Interval {
        self.inner.theta_domain()
    }
}

impl<M: ModelSpec + ?Sized> ModelSpec for Arc<M> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn density(&self, y: f64, theta: f64) -> f64 {
        (**self).density(y, theta)
    }
    fn log_density(&self, y: f64, theta: f64) -> f64 {
        (**self).log_density(y, theta)
    }
    fn boundary(&self, theta: f64) -> f64 {
        (**self).boundary(theta)
    }
    fn boundary_slope(&self, theta: f64) -> f64 {
        (**self).boundary_slope(theta)
    }
    fn boundary_inverse(&self, y: f64) -> f64 {
        (**self).boundary_inverse(y)
    }
    fn sample_one(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        (**self).sample_one(theta, rng)
    }
    fn theta_domain(&self) -> Interval {
        (**self).theta_domain()
    }
}

/// Builtin benchmark family by id: `halfnormal`, `uniform`,
/// `offset-truncnormal:<offset>`.
pub fn benchmark_model(id: &str) -> Result<Arc<dyn ModelSpec>> {
    let id = id.trim();
    match id {
        "halfnormal" => Ok(Arc::new(HalfNormalShift)),
        "uniform" => Ok(Arc::new(UniformShift)),
        _ => {
            if let Some(rest) = id.strip_prefix("offset-truncnormal:") {
                let offset: f64 = rest
                    .parse()
                    .map_err(|_| Error::UnknownModel(id.to_string()))?;
                Ok(Arc::new(OffsetTruncNormal::new(offset)?))
            } else {
                Err(Error::UnknownModel(id.to_string()))
            }
        }
    }
}

/// Builtin covariate family by id: `toy-exp2`, `toy-truncnorm2`.
pub fn covariate_model(id: &str) -> Result<Arc<dyn CovariateModelSpec>> {
    match id.trim() {
        "toy-exp2" => Ok(Arc::new(ShiftedExponentialLevels::toy())),
        "toy-truncnorm2" => Ok(Arc::new(TruncNormalLevels::toy())),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Either kind of builtin family.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Benchmark(Arc<dyn ModelSpec>),
    Covariate(Arc<dyn CovariateModelSpec>),
}

impl AnyModel {
    pub fn from_id(id: &str) -> Result<Self> {
        match covariate_model(id) {
            Ok(m) => Ok(AnyModel::Covariate(m)),
            Err(_) => benchmark_model(id).map(AnyModel::Benchmark),
        }
    }
}

/// Where a sample came from after splitting: a fingerprint of the parent
/// sample and the parent indices it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub parent: u64,
    pub indices: Vec<usize>,
}

impl Provenance {
    pub fn overlaps(&self, other: &Provenance) -> bool {
        if self.parent != other.parent {
            return false;
        }
        let mut a = self.indices.clone();
        a.sort_unstable();
        other.indices.iter().any(|i| a.binary_search(i).is_ok())
    }
}

/// An iid sample `Y^n`, optionally paired with covariate level indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    levels: Option<Vec<usize>>,
    min_y: f64,
    provenance: Option<Provenance>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite values".into()));
        }
        let min_y = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            values,
            levels: None,
            min_y,
            provenance: None,
        })
    }

    pub fn with_levels(values: Vec<f64>, levels: Vec<usize>) -> Result<Self> {
        if levels.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} values but {} covariate levels",
                values.len(),
                levels.len()
            )));
        }
        let mut s = Self::new(values)?;
        s.levels = Some(levels);
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn levels(&self) -> Option<&[usize]> {
        self.levels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Y_(1)`.
    pub fn min_y(&self) -> f64 {
        self.min_y
    }

    /// Minimum per covariate level; `+∞` for levels with no observation.
    pub fn level_minima(&self, n_levels: usize) -> Option<Vec<f64>> {
        let levels = self.levels.as_ref()?;
        let mut out = vec![f64::INFINITY; n_levels];
        for (&y, &j) in self.values.iter().zip(levels) {
            if j < n_levels && y < out[j] {
                out[j] = y;
            }
        }
        Some(out)
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Stable content hash, used to tag the halves of a split.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        self.levels.hash(&mut h);
        h.finish()
    }

    /// Sub-sample at `indices`, tagged with its provenance in `self`.
    pub(crate) fn subset(&self, indices: &[usize]) -> Result<Self> {
        let values = indices.iter().map(|&i| self.values[i]).collect();
        let mut s = match &self.levels {
            Some(l) => Self::with_levels(values, indices.iter().map(|&i| l[i]).collect())?,
            None => Self::new(values)?,
        };
        s.provenance = Some(Provenance {
            parent: self.fingerprint(),
            indices: indices.to_vec(),
        });
        Ok(s)
    }
}

/// `n` iid draws from a benchmark family at `θ`.
pub fn draw_sample<M, R>(model: &M, theta: f64, n: usize, rng: &mut R) -> Result<Sample>
where
    M: ModelSpec + ?Sized,
    R: RngCore,
{
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if !model.theta_domain().contains(theta) {
        return Err(Error::InvalidInput(format!("θ = {theta} is outside the parameter domain")));
    }
    let values = (0..n).map(|_| model.sample_one(theta, rng)).collect();
    Sample::new(values)
}

/// `n` iid `(y, x)` draws from a covariate family at `(θ, γ)`.
pub fn draw_covariate_sample<M, R>(
    model: &M,
    theta: f64,
    gamma: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Sample>
where
    M: CovariateModelSpec + ?Sized,
    R: RngCore,
{
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if gamma.len() != model.gamma_dim() {
        return Err(Error::InvalidInput(format!(
            "γ has {} entries, model expects {}",
            gamma.len(),
            model.gamma_dim()
        )));
    }
    let mut values = Vec::with_capacity(n);
    let mut levels = Vec::with_capacity(n);
    for _ in 0..n {
        let (y, j) = model.sample_one(theta, gamma, rng);
        values.push(y);
        levels.push(j);
    }
    Sample::with_levels(values, levels)
}

fn next_down(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY {
        return x;
    }
    if x == 0.0 {
        return -f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits - 1)
    } else {
        f64::from_bits(bits + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn builtins() -> Vec<Arc<dyn ModelSpec>> {
        vec![
            benchmark_model("halfnormal").unwrap(),
            benchmark_model("offset-truncnormal:1.25").unwrap(),
            benchmark_model("uniform").unwrap(),
        ]
    }

    // Simpson's rule, independent of the library's CDF routines.
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let m = m + m % 2;
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn halfnormal_values() {
        let m = HalfNormalShift;
        let two_phi0 = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((m.density(0.0, 0.0) - two_phi0).abs() < 1e-15);
        assert!((m.density(0.0, 0.0) - 0.797_884_560_8).abs() < 1e-10);
        assert_eq!(m.boundary(1.3), 1.3);
        assert_eq!(m.boundary_slope(1.3), 1.0);
        assert!(m.support_density(-0.1, 0.0).is_none());
        assert!(m.support_density(0.0, 0.0).is_some());
    }

    #[test]
    fn offset_truncnormal_values() {
        let m = OffsetTruncNormal::new(1.25).unwrap();
        assert_eq!(m.boundary(0.0), -1.25);
        // φ(−1.25)/Φ(1.25) with φ and Φ from the closed form / quadrature
        let phi = (-0.5f64 * 1.25 * 1.25).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = 0.5 + integrate(
            |t| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            0.0,
            1.25,
            20_000,
        );
        assert!((m.density(-1.25, 0.0) - phi / cdf).abs() < 1e-12);
        assert!((m.density(-1.25, 0.0) - 0.204_226).abs() < 1e-6);
        assert!(OffsetTruncNormal::new(0.0).is_err());
        assert!(OffsetTruncNormal::new(-1.0).is_err());
        assert!(matches!(benchmark_model("offset-truncnormal:-2"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn uniform_values() {
        let m = UniformShift;
        assert_eq!(m.density(0.5, 0.0), 1.0);
        assert_eq!(m.boundary_slope(-7.0), 1.0);
        assert_eq!(m.boundary_slope(3.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let y = m.sample_one(0.0, &mut rng);
            assert!((0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in builtins() {
            for &theta in &[-1.0, 0.0, 2.5] {
                let g = m.boundary(theta);
                let total = integrate(|y| m.density(y, theta), g, g + 1.0, 20_000)
                    + if m.id() == "uniform" {
                        0.0
                    } else {
                        integrate(|y| m.density(y, theta), g + 1.0, g + 40.0, 200_000)
                    };
                assert!((total - 1.0).abs() < 1e-6, "{}: {total}", m.id());
            }
        }
    }

    #[test]
    fn covariate_densities_integrate_to_one() {
        let models: Vec<Arc<dyn CovariateModelSpec>> =
            vec![covariate_model("toy-exp2").unwrap(), covariate_model("toy-truncnorm2").unwrap()];
        for m in models {
            let gamma = m.default_gamma();
            let total_mass: f64 = m.levels().iter().map(|l| l.mass).sum();
            assert!((total_mass - 1.0).abs() < 1e-12);
            for j in 0..m.levels().len() {
                let g = m.boundary(j, 0.1);
                let total = integrate(|y| m.density(y, j, 0.1, &gamma), g, g + 120.0, 400_000);
                assert!((total - 1.0).abs() < 1e-6, "{} level {j}: {total}", m.id());
            }
        }
    }

    #[test]
    fn log_density_consistent() {
        for m in builtins() {
            for &(y, theta) in &[(0.3, 0.0), (2.0, 1.5), (-1.0, -0.5)] {
                let d = m.density(y, theta);
                if d > 1e-300 {
                    assert!((m.log_density(y, theta) - d.ln()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn boundary_is_increasing_and_invertible() {
        for m in builtins() {
            let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
            for w in grid.windows(2) {
                assert!(m.boundary(w[1]) > m.boundary(w[0]));
            }
            for &y in &[-3.0, 0.0, 0.7] {
                let t = m.boundary_inverse(y);
                assert!(m.boundary(t) <= y);
                assert!((m.boundary(t) - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generic_boundary_inverse() {
        #[derive(Debug)]
        struct Cubic;
        impl ModelSpec for Cubic {
            fn id(&self) -> String {
                "cubic".into()
            }
            fn density(&self, _y: f64, _t: f64) -> f64 {
                1.0
            }
            fn boundary(&self, t: f64) -> f64 {
                t + t * t * t
            }
            fn boundary_slope(&self, t: f64) -> f64 {
                1.0 + 3.0 * t * t
            }
            fn sample_one(&self, t: f64, _rng: &mut dyn RngCore) -> f64 {
                t
            }
        }
        let t = Cubic.boundary_inverse(10.0);
        assert!((t - 2.0).abs() < 1e-12);
        assert!(Cubic.boundary(t) <= 10.0);
    }

    #[test]
    fn draws_respect_support_and_are_reproducible() {
        let m = HalfNormalShift;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = draw_sample(&m, 2.0, 5, &mut rng).unwrap();
        assert!(s.values().iter().all(|&y| y >= 2.0));
        assert_eq!(s.min_y(), s.values().iter().copied().fold(f64::INFINITY, f64::min));

        let a = draw_sample(&m, 0.0, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = draw_sample(&m, 0.0, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(draw_sample(&m, 0.0, 0, &mut rng).is_err());
    }

    #[test]
    fn halfnormal_sample_mean() {
        let m = HalfNormalShift;
        let s = draw_sample(&m, 0.0, 100_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mean = s.values().iter().sum::<f64>() / s.len() as f64;
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expected).abs() < 0.01, "{mean}");
    }

    #[test]
    fn sampler_matches_integrated_density() {
        for m in builtins() {
            for &theta in &[-0.5, 0.0, 1.0] {
                let mut rng = ChaCha8Rng::seed_from_u64(77);
                let mut ys: Vec<f64> =
                    (0..100_000).map(|_| m.sample_one(theta, &mut rng)).collect();
                ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let g = m.boundary(theta);
                // cumulative trapezoid on a fine grid
                let step = 1e-3;
                let grid_n = 12_000;
                let mut cdf = vec![0.0; grid_n + 1];
                for i in 1..=grid_n {
                    let a = g + (i - 1) as f64 * step;
                    let b = a + step;
                    cdf[i] = cdf[i - 1] + 0.5 * step * (m.density(a, theta) + m.density(b, theta));
                }
                let eval = |y: f64| {
                    let t = (y - g) / step;
                    let i = (t.floor() as usize).min(grid_n - 1);
                    let frac = t - i as f64;
                    cdf[i] + frac * (cdf[i + 1] - cdf[i])
                };
                let n = ys.len() as f64;
                let mut ks: f64 = 0.0;
                for (k, &y) in ys.iter().enumerate() {
                    let f = eval(y);
                    ks = ks.max((f - k as f64 / n).abs()).max((f - (k + 1) as f64 / n).abs());
                }
                assert!(ks < 0.01, "{} θ={theta}: KS {ks}", m.id());
            }
        }
    }

    #[test]
    fn covariate_sample_levels() {
        let m = ShiftedExponentialLevels::toy();
        let gamma = m.default_gamma();
        let s = draw_covariate_sample(&m, 0.0, &gamma, 2000, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        let minima = s.level_minima(2).unwrap();
        assert!(minima.iter().all(|&v| v >= 0.0));
        let ones = s.levels().unwrap().iter().filter(|&&j| j == 1).count();
        assert!((ones as f64 / 2000.0 - 0.5).abs() < 0.05);
        assert!(draw_covariate_sample(&m, 0.0, &[1.0], 5, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn registry() {
        assert!(benchmark_model("nope").is_err());
        assert!(matches!(AnyModel::from_id("toy-exp2"), Ok(AnyModel::Covariate(_))));
        assert!(matches!(AnyModel::from_id("uniform"), Ok(AnyModel::Benchmark(_))));
        assert_eq!(benchmark_model("offset-truncnormal:1.25").unwrap().id(), "offset-truncnormal:1.25");
        assert!(matches!(AnyModel::from_id("bogus"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn invalid_masses_rejected() {
        let bad = vec![
            CovariateLevel { value: 0.0, mass: 0.5 },
            CovariateLevel { value: 1.0, mass: 0.4 },
        ];
        assert!(ShiftedExponentialLevels::new(bad, vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn provenance_overlap() {
        let a = Provenance { parent: 1, indices: vec![0, 1, 2] };
        let b = Provenance { parent: 1, indices: vec![3, 4] };
        let c = Provenance { parent: 1, indices: vec![2, 9] };
        let d = Provenance { parent: 2, indices: vec![0, 1] };
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&c));
        assert!(!a.overlaps(&d));
    }
}
