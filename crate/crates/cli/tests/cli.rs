use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nlr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn nlr_threads(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlr"))
        .args(args)
        .env("NLR_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn write_halfnormal_data(path: &Path, theta: f64, n: usize) {
    // deterministic quantiles of the half-normal shifted by θ
    let mut text = String::from("y\n");
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let q = inverse_halfnormal(u);
        text.push_str(&format!("{}\n", theta + q));
    }
    std::fs::write(path, text).unwrap();
}

fn inverse_halfnormal(u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let cdf = erf_approx(mid / std::f64::consts::SQRT_2);
        if cdf < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn erf_approx(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26 is plenty for building test data
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    1.0 - poly * (-x * x).exp()
}

#[test]
fn envelope_is_deterministic_csv() {
    let args = [
        "envelope", "--model", "halfnormal", "--alpha", "0.05", "--side", "plus", "--h-max", "5", "--step", "0.1",
    ];
    let out = nlr(&args);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("h,envelope,lower_bound,branch"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0][..2], ["0", "0.05"]);
    let lambda = std::f64::consts::FRAC_PI_2.sqrt();
    for r in &rows {
        let h: f64 = r[0].parse().unwrap();
        let env: f64 = r[1].parse().unwrap();
        assert!((env - (0.05 * (h / lambda).exp()).min(1.0)).abs() < 1e-9);
    }
    assert_eq!(rows[50][3], "saturated");
    assert_eq!(stdout(&nlr(&args)), text);
}

#[test]
fn envelope_minus_and_two_sided() {
    let out = nlr(&["envelope", "--model", "uniform", "--side", "minus", "--h-max", "1", "--step", "0.5"]);
    assert!(out.status.success());
    let rows = data_rows(&stdout(&out));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["0", "-0.5", "-1"]);
    assert!(rows.iter().all(|r| r[3] == "minus"));
    let out = nlr(&["envelope", "--model", "halfnormal", "--side", "two", "--h-max", "1", "--step", "0.5"]);
    assert_eq!(data_rows(&stdout(&out)).len(), 5);
}

#[test]
fn stochastic_subcommands_need_a_seed() {
    for sub in ["power", "compare-wald", "test"] {
        let out = nlr(&[sub, "--model", "halfnormal"]);
        assert_eq!(out.status.code(), Some(2), "{sub}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    }
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(nlr(&["power", "--seed", "1", "--bogus"]).status.code(), Some(2));
    assert_eq!(nlr(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(nlr(&["power", "--seed", "1", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(nlr(&["power", "--seed", "1", "--model", "nope"]).status.code(), Some(2));
    assert_eq!(nlr(&["power", "--seed", "1", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(
        nlr(&["power", "--seed", "1", "--side", "plus", "--h-grid", "-1,0"]).status.code(),
        Some(2)
    );
    assert_eq!(nlr(&["power", "--seed", "1", "--gnuplot", "x.gp"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let out = nlr(&["test", "--model", "halfnormal", "--data", "/nonexistent/data.csv", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn test_emits_one_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.csv");
    write_halfnormal_data(&data, 0.0, 200);
    let d = data.to_str().unwrap();
    let out = nlr(&["test", "--model", "halfnormal", "--theta0", "0", "--side", "plus", "--data", d, "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    let v: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["statistic", "branch", "reject_probability", "coin", "hbar_used", "lambda_used"]);
    assert!((v["hbar_used"].as_f64().unwrap() - 3.754_593_6).abs() < 1e-6);
    assert!((v["lambda_used"].as_f64().unwrap() - 1.253_314_137).abs() < 1e-8);
    assert!(v["coin"].is_boolean());

    // a support violation rejects for certain
    let out = nlr(&["test", "--model", "halfnormal", "--theta0", "0.5", "--data", d, "--seed", "4"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["branch"], "support_violation");
    assert_eq!(v["reject_probability"], 1.0);
    assert_eq!(v["coin"], true);

    let out = nlr(&["test", "--model", "halfnormal", "--side", "minus", "--hbar", "-inf", "--data", d, "--seed", "4"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["hbar_used"], "-inf");
    assert_eq!(v["branch"], "randomize");
    assert_eq!(v["reject_probability"], 0.05);

    let a = nlr(&["test", "--model", "halfnormal", "--side", "minus", "--hbar", "-inf", "--data", d, "--seed", "9"]);
    let b = nlr(&["test", "--model", "halfnormal", "--side", "minus", "--hbar", "-inf", "--data", d, "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn covariate_test_with_split_and_aux() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("xy.csv");
    let mut text = String::from("y,level\n");
    for i in 0..400 {
        let u = (i as f64 + 0.5) / 400.0;
        let level = i % 2;
        let rate = [0.5, 0.25][level];
        text.push_str(&format!("{},{}\n", -(1.0 - u).ln() / rate, level));
    }
    std::fs::write(&data, &text).unwrap();
    let d = data.to_str().unwrap();
    let out = nlr(&["test", "--model", "toy-exp2", "--data", d, "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["lambda_used"].as_f64().unwrap() > 1.0);
    let out = nlr(&["test", "--model", "toy-exp2", "--data", d, "--aux", d, "--side", "two", "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn power_csv_schema_and_determinism() {
    let args = ["power", "--seed", "11", "--replications", "100", "--n", "50", "--side", "two"];
    let a = nlr_threads(&args, 1);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    assert!(text.lines().any(|l| l.starts_with("# aggregation = probability")));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "h,reject_rate,mc_se,envelope,lower_bound,side,epsilon,hbar,n,alpha,seed");
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert_eq!(r.len(), 11);
        assert_eq!(r[4], "");
        assert_eq!(r[5], "two");
        assert_eq!(r[10], "11");
    }
    for threads in [2, 8] {
        assert_eq!(nlr_threads(&args, threads).stdout, a.stdout);
    }
}

#[test]
fn config_file_and_gnuplot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.conf");
    std::fs::write(
        &cfg,
        "# minus side, sentinel\nside = minus\nhbar_policy = -inf\nn = 40\nreplications = 50\nh_grid = 0:-1:-3\n",
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let gp = dir.path().join("out.gp");
    let out = nlr(&[
        "power",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--coin",
        "--output",
        csv.to_str().unwrap(),
        "--gnuplot",
        gp.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("# aggregation = coin"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[7] == "-inf" && r[6].is_empty()));
    let script = std::fs::read_to_string(&gp).unwrap();
    assert!(script.contains(csv.to_str().unwrap()));

    std::fs::write(&cfg, "sides = minus\n").unwrap();
    assert_eq!(nlr(&["power", "--config", cfg.to_str().unwrap(), "--seed", "3"]).status.code(), Some(2));
}

#[test]
fn compare_wald_fig_ch_preset() {
    let args = ["compare-wald", "--preset", "fig-ch", "--seed", "5", "--replications", "300"];
    let a = nlr_threads(&args, 1);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "h,nlr_reject_rate,nlr_mc_se,wald_reject_rate,wald_mc_se,envelope,n,alpha,seed");
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 11);
    let mut gap = 0.0;
    for r in &rows {
        assert_eq!(r.len(), 9);
        assert_eq!(r[6], "20");
        let nlr_rate: f64 = r[1].parse().unwrap();
        let wald_rate: f64 = r[3].parse().unwrap();
        gap += nlr_rate - wald_rate;
    }
    assert!(gap > 0.0);
    assert_eq!(nlr_threads(&args, 4).stdout, a.stdout);
    assert_eq!(nlr(&["power", "--preset", "fig-ch", "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn confidence_set_contains_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.csv");
    write_halfnormal_data(&data, 1.0, 200);
    let out = nlr(&["cs", "--model", "halfnormal", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let lo = v["lower"].as_f64().unwrap();
    let hi = v["upper"].as_f64().unwrap();
    assert!(lo <= 1.0 && 1.0 <= hi, "[{lo}, {hi}]");
    assert!(hi - lo < 0.05);
}
