//! Flat `key = value` scenario files.

use std::str::FromStr;

use super::Scenario;
use crate::error::{config, Error, Result};

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse `{value}`")))
}

fn optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value {
        "" | "none" | "default" => Ok(None),
        v => number(key, v).map(Some),
    }
}

/// `start:step:end` (inclusive) or a comma-separated list, optionally in
/// brackets.
pub fn parse_h_grid(spec: &str) -> Result<Vec<f64>> {
    let s = spec.trim().trim_start_matches('[').trim_end_matches(']').trim();
    if s.is_empty() {
        return config("h_grid is empty");
    }
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [start, step, end] => {
            let (start, step, end): (f64, f64, f64) =
                (number("h_grid", start)?, number("h_grid", step)?, number("h_grid", end)?);
            if !(step.is_finite() && step != 0.0 && start.is_finite() && end.is_finite()) {
                return config(format!("h_grid: bad range `{spec}`"));
            }
            let span = (end - start) / step;
            if span < -1e-9 {
                return config(format!("h_grid: step {step} does not lead from {start} to {end}"));
            }
            let count = (span + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return config("h_grid: too many points");
            }
            // index times step keeps grid points free of accumulated drift
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        [_] => s
            .split(',')
            .map(|v| number("h_grid", v.trim()))
            .collect(),
        _ => config(format!("h_grid: expected start:step:end or a list, got `{spec}`")),
    }
}

/// Applies `key = value` overrides in order.
pub fn scenario_from_pairs<'a, I>(mut scenario: Scenario, pairs: I) -> Result<Scenario>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    for (key, value) in pairs {
        let value = value.trim();
        match key.trim() {
            "model_id" => scenario.model_id = value.to_string(),
            "theta0" => scenario.theta0 = number("theta0", value)?,
            "side" => scenario.side = value.parse()?,
            "alpha" => scenario.alpha = number("alpha", value)?,
            "epsilon" => scenario.epsilon = optional("epsilon", value)?,
            "epsilon2" => scenario.epsilon2 = optional("epsilon2", value)?,
            "epsilon3" => scenario.epsilon3 = optional("epsilon3", value)?,
            "hbar_policy" => scenario.hbar_policy = value.parse()?,
            "truncation" => scenario.truncation = number("truncation", value)?,
            "n" => scenario.n = number("n", value)?,
            "h_grid" => scenario.h_grid = parse_h_grid(value)?,
            "replications" => scenario.replications = number("replications", value)?,
            "master_seed" => scenario.master_seed = number("master_seed", value)?,
            "estimator_policy" => scenario.estimator_policy = value.parse()?,
            "aggregation" => scenario.aggregation = value.parse()?,
            other => return config(format!("unknown scenario key `{other}`")),
        }
    }
    Ok(scenario)
}

/// Parses a scenario file on top of `base`.
pub fn parse_config(text: &str, base: Scenario) -> Result<Scenario> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config(format!("line {}: expected `key = value`", lineno + 1));
        };
        pairs.push((k.trim(), v.trim()));
    }
    scenario_from_pairs(base, pairs)
}
