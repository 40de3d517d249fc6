//! `nlr`: single tests, power studies, envelopes, confidence sets and the
//! Wald comparison from the command line.

mod data;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlr_core::estimate::{split_and_estimate, NuisanceEstimates};
use nlr_core::limit::{envelope_rows, lambda_benchmark, lambda_general};
use nlr_core::model::AnyModel;
use nlr_core::nlr::{
    confidence_set, resolve_hbar_plus, test_minus, test_minus_general, test_plus, test_plus_general,
    test_twosided, test_twosided_general,
};
use nlr_core::sim::{
    emit_comparison_csv, emit_csv, emit_envelope_csv, parse_config, parse_h_grid, preset, run_comparison,
    run_power_study, write_gnuplot, Aggregation, EstimatorPolicy, PlotKind, PresetRun,
};
use nlr_core::{
    Error, HbarPolicy, LrValue, Randomization, Result, Scenario, Side, SplitRule, Statistic, TestConfig,
    TestOutcome,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "nlr", version, about = "Likelihood-ratio tests for models with parameter-dependent support")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on observed data and print a JSON record.
    Test(TestArgs),
    /// Monte Carlo power curves as CSV.
    Power(PowerArgs),
    /// Power envelope and lower bound as CSV.
    Envelope(EnvelopeArgs),
    /// Confidence set by inverting the two-sided test.
    Cs(CsArgs),
    /// NLR and Wald power on common random numbers as CSV.
    CompareWald(PowerArgs),
}

#[derive(Args)]
struct TestSettings {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon2: Option<f64>,
    #[arg(long)]
    epsilon3: Option<f64>,
    /// A number, `auto`, `truncated`, `-inf` or `pi:<power>`.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    hbar: String,
    /// `M` in the truncated minus-side and two-sided tests.
    #[arg(long, default_value_t = 50.0)]
    truncation: f64,
}

impl TestSettings {
    fn config(&self) -> Result<TestConfig> {
        Ok(TestConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            epsilon2: self.epsilon2,
            epsilon3: self.epsilon3,
            hbar_policy: self.hbar.parse()?,
            truncation: self.truncation,
            randomization: Randomization::CoinFlip,
        })
    }
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta0: f64,
    #[arg(long, default_value = "plus")]
    side: Side,
    #[command(flatten)]
    settings: TestSettings,
    /// Observations: one `y` or `y,level` per line.
    #[arg(long)]
    data: PathBuf,
    /// Auxiliary sample for the nuisance estimates of covariate models;
    /// without it the data are split in two at random.
    #[arg(long)]
    aux: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write a gnuplot script for the CSV (needs --output).
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// Start from a shipped preset.
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` scenario file applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<f64>,
    #[arg(long)]
    side: Option<Side>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon2: Option<f64>,
    #[arg(long)]
    epsilon3: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hbar: Option<String>,
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// `start:step:end` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    h_grid: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    /// `known` or `split` (covariate models).
    #[arg(long)]
    estimator: Option<EstimatorPolicy>,
    /// Aggregate realized coin flips instead of rejection probabilities.
    #[arg(long)]
    coin: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta0: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "plus")]
    side: Side,
    #[arg(long, default_value_t = 5.0)]
    h_max: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Alternative for the lower-bound column.
    #[arg(long, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct CsArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    truncation: f64,
    /// Explicit θ grid (`start:step:end` or a list); defaults to a window
    /// below the largest admissible θ.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Points in the default grid.
    #[arg(long, default_value_t = 2001)]
    points: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Power(a) => cmd_power(a),
        Command::Envelope(a) => cmd_envelope(a),
        Command::Cs(a) => cmd_cs(a),
        Command::CompareWald(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn lr_json(v: &LrValue) -> Value {
    json!({
        "kind": v.kind(),
        "log_z": v.log_z().map(num).unwrap_or(Value::Null),
    })
}

fn statistic_json(s: &Statistic) -> Value {
    match s {
        Statistic::Lr(v) => json!({ "type": "lr", "lr": lr_json(v) }),
        Statistic::TwoSided { plus, minus } => {
            json!({ "type": "two_sided", "plus": lr_json(plus), "minus": lr_json(minus) })
        }
        Statistic::SupportCheck { violated } => json!({ "type": "support_check", "violated": violated }),
        Statistic::Wald { scaled, critical } => {
            json!({ "type": "wald", "scaled": num(*scaled), "critical": num(*critical) })
        }
    }
}

fn outcome_json(out: &TestOutcome) -> Value {
    json!({
        "statistic": statistic_json(&out.statistic),
        "branch": out.branch.name(),
        "reject_probability": out.reject_probability,
        "coin": out.coin,
        "hbar_used": out.hbar_used.map(num),
        "lambda_used": out.lambda_used,
    })
}

fn cmd_test(a: TestArgs) -> Result<()> {
    let cfg = a.settings.config()?;
    cfg.validate()?;
    let model = AnyModel::from_id(&a.model)?;
    let sample = data::read_sample(&a.data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let out = match model {
        AnyModel::Benchmark(m) => match a.side {
            Side::Plus => test_plus(&*m, &sample, a.theta0, &cfg, &mut rng)?,
            Side::Minus => test_minus(&*m, &sample, a.theta0, &cfg, &mut rng)?,
            Side::Two => test_twosided(&*m, &sample, a.theta0, &cfg, &mut rng)?,
        },
        AnyModel::Covariate(m) => {
            let (main, est) = match &a.aux {
                Some(path) => {
                    let aux = data::read_sample(path)?;
                    let est = NuisanceEstimates::from_aux(&*m, &aux, a.theta0, cfg.alpha, cfg.truncation)?;
                    (sample, est)
                }
                None => split_and_estimate(
                    &*m,
                    &sample,
                    a.theta0,
                    SplitRule::Seeded(a.seed),
                    cfg.alpha,
                    cfg.truncation,
                )?,
            };
            match a.side {
                Side::Plus => test_plus_general(&*m, &main, a.theta0, &est, &cfg, &mut rng)?,
                Side::Minus => test_minus_general(&*m, &main, a.theta0, &est, &cfg, &mut rng)?,
                Side::Two => test_twosided_general(&*m, &main, a.theta0, &est, &cfg, &mut rng)?,
            }
        }
    };
    println!("{}", outcome_json(&out));
    Ok(())
}

fn apply_overrides(mut s: Scenario, a: &PowerArgs, file: Option<&str>) -> Result<Scenario> {
    if let Some(text) = file {
        s = parse_config(text, s)?;
    }
    s.master_seed = a.seed;
    if let Some(v) = &a.model {
        s.model_id = v.clone();
    }
    if let Some(v) = a.theta0 {
        s.theta0 = v;
    }
    if let Some(v) = a.side {
        s.side = v;
    }
    if let Some(v) = a.alpha {
        s.alpha = v;
    }
    if a.epsilon.is_some() {
        s.epsilon = a.epsilon;
    }
    if a.epsilon2.is_some() {
        s.epsilon2 = a.epsilon2;
    }
    if a.epsilon3.is_some() {
        s.epsilon3 = a.epsilon3;
    }
    if let Some(v) = &a.hbar {
        s.hbar_policy = v.parse::<HbarPolicy>()?;
    }
    if let Some(v) = a.truncation {
        s.truncation = v;
    }
    if let Some(v) = a.n {
        s.n = v;
    }
    if let Some(v) = &a.h_grid {
        s.h_grid = parse_h_grid(v)?;
    }
    if let Some(v) = a.replications {
        s.replications = v;
    }
    if let Some(v) = a.estimator {
        s.estimator_policy = v;
    }
    if a.coin {
        s.aggregation = Aggregation::Coin;
    }
    Ok(s)
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| {
        std::fs::read_to_string(p)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", p.display())))
    })
    .transpose()
}

fn default_grid(side: Side) -> Vec<f64> {
    match side {
        Side::Minus => (0..=10).map(|i| i as f64 * -0.5).collect(),
        Side::Two => (-10..=10).map(|i| i as f64 * 0.5).collect(),
        Side::Plus => (0..=10).map(|i| i as f64 * 0.5).collect(),
    }
}

/// Writes through `emit` to `--output` or standard output, then the gnuplot
/// script if requested.
fn write_output(out: &OutputArgs, kind: PlotKind, emit: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if out.gnuplot.is_some() && out.output.is_none() {
        return Err(Error::InvalidConfig("--gnuplot needs --output".into()));
    }
    match &out.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            emit(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            emit(&mut w)?;
            w.flush()?;
        }
    }
    if let (Some(script), Some(csv)) = (&out.gnuplot, &out.output) {
        let mut w = BufWriter::new(File::create(script)?);
        write_gnuplot(&csv.to_string_lossy(), kind, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_power(a: PowerArgs) -> Result<()> {
    let file = read_config(a.config.as_deref())?;
    let scenarios = match &a.preset {
        Some(name) => match preset(name, a.seed)? {
            PresetRun::Power(v) => v,
            PresetRun::Comparison(_) => {
                return Err(Error::InvalidConfig(format!("preset `{name}` is a Wald comparison; use compare-wald")))
            }
        },
        None => vec![Scenario::default()],
    };
    let scenarios = scenarios
        .into_iter()
        .map(|s| {
            let mut s = apply_overrides(s, &a, file.as_deref())?;
            // the stock grid is for the plus side; follow the side unless a
            // grid was chosen
            if s.h_grid == Scenario::default().h_grid && s.side != Side::Plus {
                s.h_grid = default_grid(s.side);
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let studies = scenarios.iter().map(run_power_study).collect::<Result<Vec<_>>>()?;
    write_output(&a.out, PlotKind::Power, |w| emit_csv(&studies, w))
}

fn cmd_compare(a: PowerArgs) -> Result<()> {
    let file = read_config(a.config.as_deref())?;
    let base = match &a.preset {
        Some(name) => match preset(name, a.seed)? {
            PresetRun::Comparison(s) => s,
            PresetRun::Power(_) => {
                return Err(Error::InvalidConfig(format!("preset `{name}` is not a Wald comparison")))
            }
        },
        None => Scenario::default(),
    };
    let s = apply_overrides(base, &a, file.as_deref())?;
    let study = run_comparison(&s)?;
    write_output(&a.out, PlotKind::Comparison, |w| emit_comparison_csv(&study, w))
}

fn limit_for(model: &AnyModel, theta0: f64) -> Result<nlr_core::LimitParams> {
    match model {
        AnyModel::Benchmark(m) => lambda_benchmark(&**m, theta0),
        AnyModel::Covariate(m) => lambda_general(&**m, theta0, &m.default_gamma()),
    }
}

fn cmd_envelope(a: EnvelopeArgs) -> Result<()> {
    if !(a.step > 0.0 && a.h_max >= 0.0 && a.step.is_finite() && a.h_max.is_finite()) {
        return Err(Error::InvalidConfig("--step must be positive and --h-max nonnegative".into()));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("α must lie in (0, 1), got {}", a.alpha)));
    }
    let model = AnyModel::from_id(&a.model)?;
    let params = limit_for(&model, a.theta0)?;
    let count = (a.h_max / a.step + 1e-9).floor() as usize;
    let grid: Vec<f64> = match a.side {
        Side::Plus => (0..=count).map(|i| i as f64 * a.step).collect(),
        Side::Minus => (0..=count).map(|i| -(i as f64) * a.step).collect(),
        Side::Two => (0..=2 * count).map(|i| (i as f64 - count as f64) * a.step).collect(),
    };
    let hbar = match (a.hbar, a.side) {
        (Some(h), _) => Some(h),
        (None, Side::Plus) => Some(resolve_hbar_plus(&params, a.alpha, HbarPolicy::Optimal)?),
        (None, _) => None,
    };
    let rows = envelope_rows(&params, a.alpha, a.side, &grid, hbar);
    write_output(&a.out, PlotKind::Envelope, |w| emit_envelope_csv(&rows, w))
}

fn cmd_cs(a: CsArgs) -> Result<()> {
    let model = match AnyModel::from_id(&a.model)? {
        AnyModel::Benchmark(m) => m,
        AnyModel::Covariate(_) => {
            return Err(Error::InvalidConfig("confidence sets are available for benchmark models".into()))
        }
    };
    let sample = data::read_sample(&a.data)?;
    let cfg = TestConfig {
        epsilon: a.epsilon,
        truncation: a.truncation,
        ..TestConfig::new(a.alpha)
    };
    let grid = match &a.grid {
        Some(g) => parse_h_grid(g)?,
        None => {
            if a.points < 2 {
                return Err(Error::InvalidConfig("--points must be at least 2".into()));
            }
            let top = model.boundary_inverse(sample.min_y());
            let lambda = lambda_benchmark(&*model, top)?.lambda;
            let width = 4.0 * lambda * (-a.alpha.ln()).max(1.0) / sample.len() as f64;
            let step = width / (a.points - 1) as f64;
            (0..a.points).map(|i| top - width + i as f64 * step).collect()
        }
    };
    let kept = confidence_set(&*model, &sample, &grid, &cfg)?;
    let record = json!({
        "alpha": a.alpha,
        "n": sample.len(),
        "grid_points": grid.len(),
        "accepted": kept.len(),
        "lower": kept.first().copied().map(num),
        "upper": kept.last().copied().map(num),
        "theta": kept,
    });
    println!("{record}");
    Ok(())
}
