//! CSV emission and gnuplot scripts.

use std::io::Write;

use super::{ComparisonStudy, PowerStudy, Scenario};
use crate::error::Result;
use crate::limit::EnvelopeRow;

pub const POWER_HEADER: &str = "h,reject_rate,mc_se,envelope,lower_bound,side,epsilon,hbar,n,alpha,seed";
pub const COMPARISON_HEADER: &str = "h,nlr_reject_rate,nlr_mc_se,wald_reject_rate,wald_mc_se,envelope,n,alpha,seed";
pub const ENVELOPE_HEADER: &str = "h,envelope,lower_bound,branch";

/// `%.10g`: ten significant digits, trailing zeros dropped, exponent form
/// outside `[1e-5, 1e10)`.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_g).unwrap_or_default()
}

fn scenario_metadata<W: Write + ?Sized>(out: &mut W, s: &Scenario) -> std::io::Result<()> {
    writeln!(out, "# model_id = {}", s.model_id)?;
    writeln!(out, "# theta0 = {}", format_g(s.theta0))?;
    writeln!(out, "# side = {}", s.side)?;
    writeln!(out, "# alpha = {}", format_g(s.alpha))?;
    writeln!(out, "# epsilon = {}", opt(s.epsilon))?;
    writeln!(out, "# epsilon2 = {}", opt(s.epsilon2))?;
    writeln!(out, "# epsilon3 = {}", opt(s.epsilon3))?;
    writeln!(out, "# hbar_policy = {}", s.hbar_policy)?;
    writeln!(out, "# truncation = {}", format_g(s.truncation))?;
    writeln!(out, "# n = {}", s.n)?;
    writeln!(out, "# replications = {}", s.replications)?;
    writeln!(out, "# master_seed = {}", s.master_seed)?;
    writeln!(out, "# estimator_policy = {}", s.estimator_policy)?;
    writeln!(out, "# aggregation = {} ({})", s.aggregation, s.aggregation.describe())
}

/// Writes one or more power curves to a single table. Each curve is
/// preceded by its `#` metadata block.
pub fn emit_csv<W: Write + ?Sized>(studies: &[PowerStudy], out: &mut W) -> Result<()> {
    if let Some(first) = studies.first() {
        writeln!(out, "# nlr version = {}", first.version)?;
    }
    for (k, study) in studies.iter().enumerate() {
        writeln!(out, "# curve = {}", k + 1)?;
        scenario_metadata(out, &study.scenario)?;
        writeln!(out, "# lambda = {}", format_g(study.lambda))?;
    }
    writeln!(out, "{POWER_HEADER}")?;
    for study in studies {
        let s = &study.scenario;
        let eps = opt(s.effective_epsilon()?);
        let hbar = format_g(study.hbar.value());
        for p in &study.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                format_g(p.h),
                format_g(p.rejection_rate),
                format_g(p.mc_se),
                format_g(p.envelope),
                opt(p.lower_bound),
                s.side,
                eps,
                hbar,
                s.n,
                format_g(s.alpha),
                s.master_seed,
            )?;
        }
    }
    Ok(())
}

pub fn emit_comparison_csv<W: Write + ?Sized>(study: &ComparisonStudy, out: &mut W) -> Result<()> {
    writeln!(out, "# nlr version = {}", study.version)?;
    scenario_metadata(out, &study.scenario)?;
    writeln!(out, "# hbar = {}", format_g(study.hbar))?;
    writeln!(out, "# lambda = {}", format_g(study.lambda))?;
    writeln!(out, "# wald = reject iff n(theta_hat - theta0) > -lambda log(alpha)")?;
    writeln!(out, "{COMPARISON_HEADER}")?;
    let s = &study.scenario;
    for p in &study.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            format_g(p.h),
            format_g(p.nlr_rate),
            format_g(p.nlr_se),
            format_g(p.wald_rate),
            format_g(p.wald_se),
            format_g(p.envelope),
            s.n,
            format_g(s.alpha),
            s.master_seed,
        )?;
    }
    Ok(())
}

pub fn emit_envelope_csv<W: Write + ?Sized>(rows: &[EnvelopeRow], out: &mut W) -> Result<()> {
    writeln!(out, "{ENVELOPE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            format_g(r.h),
            format_g(r.envelope),
            opt(r.lower_bound),
            r.branch
        )?;
    }
    Ok(())
}

/// Which table a gnuplot script reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Power,
    Comparison,
    Envelope,
}

/// A gnuplot script that renders `csv_path` to `<csv_path>.png`.
pub fn write_gnuplot<W: Write + ?Sized>(csv_path: &str, kind: PlotKind, out: &mut W) -> Result<()> {
    let quoted = csv_path.replace('\'', "''");
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set terminal pngcairo size 900,600")?;
    writeln!(out, "set output '{quoted}.png'")?;
    writeln!(out, "set xlabel 'h'")?;
    writeln!(out, "set ylabel 'rejection probability'")?;
    writeln!(out, "set yrange [0:1]")?;
    writeln!(out, "set key left top")?;
    match kind {
        PlotKind::Power => writeln!(
            out,
            "plot '{quoted}' using 1:2 with points pt 7 title 'NLR', \\\n     '' using 1:4 with lines lw 2 title 'envelope'"
        )?,
        PlotKind::Comparison => writeln!(
            out,
            "plot '{quoted}' using 1:2 with linespoints title 'NLR', \\\n     '' using 1:4 with linespoints title 'Wald', \\\n     '' using 1:6 with lines lw 2 title 'envelope'"
        )?,
        PlotKind::Envelope => writeln!(
            out,
            "plot '{quoted}' using 1:2 with lines lw 2 title 'envelope', \\\n     '' using 1:3 with lines dt 2 title 'lower bound'"
        )?,
    }
    Ok(())
}
