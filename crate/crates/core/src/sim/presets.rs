//! Shipped scenario presets.
//!
//! Where a preset fixes `h̄⁺` with `α > e^{−h̄/λ}`, the tuning constant must
//! lie in `[0, e^{−h̄/λ})`; those presets read each listed `ε` as a fraction
//! of `e^{−h̄/λ}`.

use super::Scenario;
use crate::error::{config, Result};
use crate::limit::{lambda_benchmark, Side};
use crate::model::HalfNormalShift;
use crate::nlr::HbarPolicy;

/// What a preset runs.
#[derive(Debug, Clone, PartialEq)]
pub enum PresetRun {
    /// Power curves written to one table.
    Power(Vec<Scenario>),
    /// NLR against Wald on common random numbers.
    Comparison(Scenario),
}

impl PresetRun {
    pub fn scenarios(&self) -> Vec<&Scenario> {
        match self {
            PresetRun::Power(v) => v.iter().collect(),
            PresetRun::Comparison(s) => vec![s],
        }
    }
}

const NAMES: [&str; 7] = [
    "fig1-upper",
    "fig1-lower",
    "fig-ch",
    "appendix-hbar",
    "appendix-eps-plus",
    "appendix-n-plus",
    "appendix-n-minus",
];

pub const EPSILON_GRID: [f64; 5] = [0.0, 0.2, 0.5, 0.9, 0.9999];
pub const N_GRID: [usize; 4] = [100, 200, 500, 1000];

pub fn preset_names() -> &'static [&'static str] {
    &NAMES
}

fn plus_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.5).collect()
}

fn minus_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * -0.5).collect()
}

fn base(seed: u64) -> Scenario {
    Scenario {
        master_seed: seed,
        ..Scenario::default()
    }
}

fn plus(seed: u64, hbar_policy: HbarPolicy, epsilon: f64) -> Scenario {
    Scenario {
        side: Side::Plus,
        hbar_policy,
        epsilon: Some(epsilon),
        h_grid: plus_grid(),
        ..base(seed)
    }
}

fn minus(seed: u64, hbar_policy: HbarPolicy, epsilon: f64) -> Scenario {
    Scenario {
        side: Side::Minus,
        hbar_policy,
        epsilon: Some(epsilon),
        h_grid: minus_grid(),
        ..base(seed)
    }
}

/// `ε` for a plus-side test at a fixed `h̄`: as given when `α ≤ e^{−h̄/λ}`,
/// scaled by `e^{−h̄/λ}` otherwise.
fn plus_epsilon_at(hbar: f64, alpha: f64, eps: f64) -> Result<f64> {
    let lambda = lambda_benchmark(&HalfNormalShift, 0.0)?.lambda;
    let p = (-hbar / lambda).exp();
    Ok(if alpha <= p { eps } else { eps * p })
}

/// The scenarios behind a named preset, all seeded from `seed`.
pub fn preset(name: &str, seed: u64) -> Result<PresetRun> {
    let alpha = Scenario::default().alpha;
    Ok(match name {
        "fig1-upper" => PresetRun::Power(
            EPSILON_GRID
                .iter()
                .map(|&e| plus(seed, HbarPolicy::Optimal, e))
                .collect(),
        ),
        "fig1-lower" => PresetRun::Power(
            EPSILON_GRID
                .iter()
                .map(|&e| minus(seed, HbarPolicy::Optimal, e))
                .collect(),
        ),
        "fig-ch" => PresetRun::Comparison(Scenario {
            model_id: "offset-truncnormal:1.25".into(),
            n: 20,
            ..plus(seed, HbarPolicy::Optimal, 0.9999)
        }),
        "appendix-hbar" => {
            let mut v = Vec::new();
            for hbar in [1.0, 5.0, 7.0] {
                let eps = plus_epsilon_at(hbar, alpha, 0.5)?;
                v.push(plus(seed, HbarPolicy::Explicit(hbar), eps));
            }
            for hbar in [-1.0, -5.0, -7.0] {
                v.push(minus(seed, HbarPolicy::Explicit(hbar), 0.5));
            }
            PresetRun::Power(v)
        }
        "appendix-eps-plus" => {
            let mut v = Vec::new();
            for hbar in [3.7, 3.8] {
                for &e in &EPSILON_GRID {
                    v.push(plus(seed, HbarPolicy::Explicit(hbar), plus_epsilon_at(hbar, alpha, e)?));
                }
            }
            PresetRun::Power(v)
        }
        "appendix-n-plus" => PresetRun::Power(
            [0.1, 0.0]
                .iter()
                .flat_map(|&e| {
                    N_GRID.iter().map(move |&n| Scenario {
                        n,
                        ..plus(seed, HbarPolicy::Optimal, e)
                    })
                })
                .collect(),
        ),
        "appendix-n-minus" => PresetRun::Power(
            [0.01, 0.0]
                .iter()
                .flat_map(|&e| {
                    N_GRID.iter().map(move |&n| Scenario {
                        n,
                        ..minus(seed, HbarPolicy::EnvelopeInversion(0.5), e)
                    })
                })
                .collect(),
        ),
        other => {
            return config(format!(
                "unknown preset `{other}` (available: {})",
                NAMES.join(", ")
            ))
        }
    })
}
