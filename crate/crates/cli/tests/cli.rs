use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dipw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dipw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dipw(args);
    assert!(
        out.status.success(),
        "dipw {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Small simulation with exported train/test files.
fn simulated(dir: &Path) -> PathBuf {
    let out = dir.join("sim");
    ok(&[
        "simulate", "--reps", "2", "--n-train", "300", "--n-test", "500", "--n-trees", "20", "--seed", "1",
        "--export-data", "--threads", "1", "--out-dir", &s(&out),
    ]);
    out
}

#[test]
fn simulate_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulated(tmp.path());
    for f in ["config.json", "report.json", "report.csv", "summary.csv", "train.csv", "test.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("replicate,method,metric,value"));
    for m in ["dipw-algo1", "ipw", "dr", "t-learner"] {
        assert!(report.contains(&format!(",{m},rmse,")), "{m}");
    }
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["command"], "simulate");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "2"), ("c", "1")] {
        let out = tmp.path().join(tag);
        ok(&[
            "simulate", "--reps", "2", "--n-train", "200", "--n-test", "300", "--n-trees", "10", "--methods",
            "dipw,ipw", "--threads", threads, "--out-dir", &s(&out),
        ]);
        reports.push((
            fs::read(out.join("report.csv")).unwrap(),
            fs::read(out.join("summary.csv")).unwrap(),
        ));
    }
    assert!(reports.iter().all(|r| r == &reports[0]));
}

#[test]
fn invalid_probability_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dipw(&["simulate", "--p-treat", "1.2", "--out-dir", &s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_treat"));
}

#[test]
fn zero_threads_is_a_usage_error() {
    let out = dipw(&["simulate", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_column_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulated(tmp.path());
    let out = dipw(&[
        "fit", "--data", &s(&sim.join("train.csv")), "--outcome", "revenue", "--out-dir",
        &s(&tmp.path().join("fit")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("revenue"));
}

#[test]
fn fit_evaluate_uplift_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulated(tmp.path());
    let train = s(&sim.join("train.csv"));
    let test = s(&sim.join("test.csv"));
    let mut models = Vec::new();
    for method in ["dipw", "ipw", "t-learner"] {
        let dir = tmp.path().join(format!("fit-{method}"));
        ok(&["fit", "--data", &train, "--method", method, "--n-trees", "20", "--out-dir", &s(&dir)]);
        models.push(dir.join("model.json"));
    }

    let coefs = fs::read_to_string(tmp.path().join("fit-dipw/coefficients.csv")).unwrap();
    let mut lines = coefs.lines();
    assert_eq!(lines.next(), Some("variable,coefficient"));
    assert!(lines.next().unwrap().starts_with("Intercept,"));
    assert_eq!(lines.count(), 50);

    let t_model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&models[2]).unwrap()).unwrap();
    assert_eq!(t_model["kind"], "t-learner");
    assert!(t_model.get("forests").is_some());

    let eval_dir = tmp.path().join("eval");
    let mut args = vec!["evaluate".to_string(), "--data".into(), test.clone(), "--out-dir".into(), s(&eval_dir)];
    for m in &models {
        args.extend(["--model".to_string(), s(m)]);
    }
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let metrics = fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().collect();
    assert_eq!(rows[0], "rank,name,kind,auuc,rmse");
    assert_eq!(rows.len(), 4);
    let auuc: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(auuc.windows(2).all(|w| w[0] >= w[1]));

    let up = tmp.path().join("uplift");
    ok(&["uplift", "--model", &s(&models[0]), "--data", &test, "--budget", "1.0", "0.2", "--out-dir", &s(&up)]);
    let curve = fs::read_to_string(up.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("k,u,baseline"));
    assert_eq!(curve.lines().count(), 501);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(up.join("summary.json")).unwrap()).unwrap();
    let gains = summary["budget_gains"].as_array().unwrap();
    let full = gains.iter().find(|g| g["budget"] == 1.0).unwrap();
    assert_eq!(full["gain"]["k"], 500);
    assert_eq!(full["gain"]["improvement_ratio"], 1.0);

    let banded = tmp.path().join("banded");
    ok(&[
        "uplift", "--model", &s(&models[0]), "--data", &test, "--band", "--n-boot", "50", "--out-dir", &s(&banded),
    ]);
    let curve = fs::read_to_string(banded.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("k,u,baseline,lower,upper"));
}

#[test]
fn config_file_supplies_options() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"reps": 1, "n_train": 150, "n_test": 100, "methods": ["ipw"], "estimator": {"n_trees": 5}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(&["--config", &s(&cfg), "simulate", "--out-dir", &s(&out)]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.contains(",ipw,")));

    fs::write(&cfg, r#"{"reps": "many"}"#).unwrap();
    let bad = dipw(&["--config", &s(&cfg), "simulate", "--out-dir", &s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}
