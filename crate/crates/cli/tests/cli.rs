use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ldp_pate::frequentist::estimate_custom_ipw;
use ldp_pate::mechanisms::CustomARecord;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldp-pate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/raw.csv")
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write(path: &str, text: &str) {
    fs::write(path, text).unwrap();
}

fn custom_a_file(dir: &TempDir, values: &[f64]) -> String {
    let path = p(dir, "a.csv");
    let mut body = String::from("a_tilde\n");
    for v in values {
        body += &format!("{v}\n");
    }
    write(&path, &body);
    write(
        &format!("{path}.manifest.json"),
        &format!(
            r#"{{"format_version":1,"scenario":"custom_a","eps_total":1.0,"eps_split":[1.0],"seed":0,"n":{},"p":0.5,"d":null}}"#,
            values.len()
        ),
    );
    path
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn custom_b_release_shape() {
    let dir = TempDir::new().unwrap();
    let raw = p(&dir, "raw.csv");
    write(&raw, "w,y\n1,0.5\n0,0.25\n1,1\n");
    let out = p(&dir, "b.csv");
    ok(&["privatize", "--scenario", "custom_b", "--eps-total", "3", "--input", &raw, "--output", &out]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "b1,b2,b3");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 3);
    }
    let manifest = json(&fs::read_to_string(format!("{out}.manifest.json")).unwrap());
    assert_eq!(manifest["scenario"], "custom_b");
    assert_eq!(manifest["n"], 3);
    assert_eq!(manifest["eps_split"], serde_json::json!([1.0, 1.0, 1.0]));
}

#[test]
fn privatize_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let raw = fixture();
    let raw = raw.to_str().unwrap();
    let (a, b, c) = (p(&dir, "a.csv"), p(&dir, "b.csv"), p(&dir, "c.csv"));
    for out in [&a, &b] {
        ok(&["privatize", "--scenario", "joint", "--eps-total", "2", "--p", "0.5", "--seed", "9", "--input", raw, "--output", out]);
    }
    ok(&["privatize", "--scenario", "joint", "--eps-total", "2", "--p", "0.5", "--seed", "10", "--input", raw, "--output", &c]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn out_of_range_outcome_names_row() {
    let dir = TempDir::new().unwrap();
    let raw = p(&dir, "raw.csv");
    write(&raw, "w,y\n1,0.5\n0,1.5\n");
    let out = run(&["privatize", "--scenario", "custom_a", "--eps-total", "1", "--p", "0.5", "--input", &raw, "--output", &p(&dir, "o.csv")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("1.5"), "{err}");
}

#[test]
fn estimate_three_value_example() {
    let dir = TempDir::new().unwrap();
    let file = custom_a_file(&dir, &[0.2, 0.6, 0.4]);
    let report = json(&ok(&["estimate", "--input", &file]));
    assert_eq!(report["method"], "custom_ipw");
    let lib = estimate_custom_ipw(
        &[0.2, 0.6, 0.4].map(|a_tilde| CustomARecord { a_tilde }),
        0.05,
    )
    .unwrap();
    assert_eq!(report["estimate"].as_f64().unwrap(), lib.estimate);
    assert!((lib.estimate - 0.4).abs() < 1e-12);
    assert_eq!(report["ci_lower"].as_f64().unwrap(), lib.ci_lower);
    assert_eq!(report["ci_upper"].as_f64().unwrap(), lib.ci_upper);
    assert_eq!(report["eps_split"], serde_json::json!([1.0]));
    assert_eq!(report["n"], 3);
}

#[test]
fn report_field_order_is_fixed() {
    let dir = TempDir::new().unwrap();
    let file = custom_a_file(&dir, &[0.2, 0.6, 0.4]);
    let text = ok(&["estimate", "--input", &file]);
    let keys: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('"'))
        .filter_map(|l| l.split('"').next())
        .collect();
    assert_eq!(
        keys,
        [
            "method", "scenario", "estimate", "std_error", "ci_lower", "ci_upper", "alpha", "clamped_point",
            "clamped_lower", "clamped_upper", "n", "eps_total", "eps_split", "p"
        ]
    );
}

#[test]
fn wider_alpha_gives_narrower_interval() {
    let dir = TempDir::new().unwrap();
    let file = custom_a_file(&dir, &[0.2, 0.6, 0.4, -0.3, 0.9]);
    let w = |alpha: &str| {
        let r = json(&ok(&["estimate", "--input", &file, "--alpha", alpha]));
        r["ci_upper"].as_f64().unwrap() - r["ci_lower"].as_f64().unwrap()
    };
    assert!(w("0.10") < w("0.05"));
}

#[test]
fn joint_without_p_is_refused() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "j.csv");
    ok(&["privatize", "--scenario", "joint", "--eps-total", "2", "--input", fixture().to_str().unwrap(), "--output", &out]);
    let res = run(&["estimate", "--input", &out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--p"));
    // Supplying p on the command line is enough.
    let report = json(&ok(&["estimate", "--input", &out, "--p", "0.5"]));
    assert_eq!(report["method"], "naive");
    assert_eq!(report["p"], 0.5);
}

#[test]
fn manifest_budget_is_enforced() {
    let dir = TempDir::new().unwrap();
    let file = custom_a_file(&dir, &[0.2, 0.6, 0.4]);
    ok(&["estimate", "--input", &file, "--eps-total", "1"]);
    let res = run(&["estimate", "--input", &file, "--eps-total", "2"]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["estimate", "--input", &file, "--p", "0.3"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn estimator_scenario_mismatch() {
    let dir = TempDir::new().unwrap();
    let file = custom_a_file(&dir, &[0.2, 0.6, 0.4]);
    let res = run(&["estimate", "--input", &file, "--estimator", "naive"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn degenerate_data_exit_code() {
    let dir = TempDir::new().unwrap();
    let file = custom_a_file(&dir, &[0.2]);
    assert_eq!(run(&["estimate", "--input", &file]).status.code(), Some(3));
}

#[test]
fn missing_manifest_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let path = p(&dir, "bare.csv");
    write(&path, "a_tilde\n0.1\n");
    assert_eq!(run(&["estimate", "--input", &path]).status.code(), Some(1));
    assert_eq!(run(&["privatize", "--scenario", "joint"]).status.code(), Some(2));
}

#[test]
fn simulate_single_replication_and_empty_grid() {
    let csv = ok(&["simulate", "--scenario", "custom_a", "--eps-total", "1", "--n", "200", "--nsim", "1"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,estimator,eps_total,eps_split,n,n_sim,bias,mse,coverage,mean_width,failure_count"
    );
    assert_eq!(lines.len(), 2);
    let coverage: f64 = lines[1].split(',').nth(8).unwrap().parse().unwrap();
    assert!(coverage == 0.0 || coverage == 1.0);

    let empty = ok(&["simulate", "--scenario", "joint"]);
    assert_eq!(empty.lines().count(), 1);
}

#[test]
fn simulate_threads_do_not_change_output() {
    let args = |t: &'static str| {
        ok(&[
            "simulate", "--scenario", "joint,custom_b", "--eps-total", "1,3", "--n", "300", "--nsim", "6", "--seed", "4",
            "--threads", t,
        ])
    };
    assert_eq!(args("1"), args("3"));
}

#[test]
fn posterior_deterministic_with_draws() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "b.csv");
    ok(&["privatize", "--scenario", "custom_b", "--eps-total", "3", "--input", fixture().to_str().unwrap(), "--output", &out]);
    let draws = p(&dir, "draws.csv");
    let args = ["posterior", "--input", &out, "--iterations", "120", "--burn-in", "40", "--seed", "2", "--draws", &draws];
    let first = ok(&args);
    let draws_text = fs::read_to_string(&draws).unwrap();
    assert_eq!(first, ok(&args));
    assert_eq!(draws_text.lines().count(), 1 + 80);
    assert!(draws_text.starts_with("iteration,pate,sample_effect\n41,"));
    let summary = json(&first);
    assert_eq!(summary["n_draws"], 80);
    assert!(summary["warnings"].is_array());
}

#[test]
fn near_noiseless_posterior_matches_ipw() {
    let dir = TempDir::new().unwrap();
    // Balanced arms, so the IPW mean equals the difference in group means.
    let raw = p(&dir, "raw.csv");
    let mut body = String::from("w,y\n");
    for i in 0..400 {
        let u = ((i * 37) % 200) as f64 / 200.0;
        let y = if i % 2 == 0 { 0.3 + 0.4 * u } else { 0.2 + 0.3 * u };
        body += &format!("{},{y}\n", (i % 2 == 0) as u8);
    }
    write(&raw, &body);
    let out = p(&dir, "a.csv");
    ok(&["privatize", "--scenario", "custom_a", "--eps-total", "1e6", "--p", "0.5", "--input", &raw, "--output", &out]);
    let ipw = json(&ok(&["estimate", "--input", &out]))["estimate"].as_f64().unwrap();
    let post = json(&ok(&["posterior", "--input", &out, "--iterations", "1500", "--burn-in", "500"]));
    let mean = post["mean"].as_f64().unwrap();
    assert!((mean - ipw).abs() < 0.03, "posterior {mean} vs ipw {ipw}");
}

// Privatize the fixture under every scenario and compare the estimate
// reports with the checked-in ones byte for byte. Set UPDATE_GOLDEN=1 to
// rewrite them after an intentional change.
#[test]
fn golden_round_trip() {
    let dir = TempDir::new().unwrap();
    let raw = fixture();
    let raw = raw.to_str().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cases: [(&str, &str, &[&str]); 4] = [
        ("joint", "2", &["--p", "0.5"]),
        ("custom_a", "1", &["--p", "0.5"]),
        ("custom_b", "3", &[]),
        ("joint_with_covariates", "9", &["--p", "0.5"]),
    ];
    for (scenario, eps, extra) in cases {
        let data = p(&dir, &format!("{scenario}.csv"));
        let mut args = vec!["privatize", "--scenario", scenario, "--eps-total", eps, "--seed", "17", "--input", raw, "--output", &data];
        args.extend_from_slice(extra);
        ok(&args);
        let report = ok(&["estimate", "--input", &data]);
        let path = golden.join(format!("{scenario}.json"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            fs::write(&path, &report).unwrap();
        }
        let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(report, expected, "{scenario}");
    }
}
