use std::path::Path;
use std::process::{Command, Output};

use modq::stats::MeanSe;

fn modq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modq")).args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(modq(&["validate", "--model", "example1"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"states": ["a", "b"], "P": [[0.5, 0.5], [1, 0]],
            "sojourns": {"a->a": {"kind": "exp", "rate": 1}, "a->b": {"kind": "exp", "rate": 1},
                         "b->a": {"kind": "exp", "rate": 1}}}"#,
    )
    .unwrap();
    let out = modq(&["validate", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ZeroDiagonal"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"states\": [").unwrap();
    let out = modq(&["validate", "--model", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn runtime_errors_exit_with_two() {
    let out = modq(&["simulate", "--model", "no_such_model"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(
        &model,
        r#"{"states": ["a", "b"], "P": [[0, 1], [1, 0]],
            "sojourns": {"a->b": {"kind": "exp", "rate": 1}, "b->a": {"kind": "exp", "rate": 2}}}"#,
    )
    .unwrap();
    let out = modq(&["simulate", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--rates"));

    let out = modq(&[
        "simulate", "--model", model.to_str().unwrap(), "--rates", r#"{"lambda": 1, "mu": [1, 2]}"#,
        "--horizon", "5",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("time,count\n0,0\n"));
}

#[test]
fn output_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let reps = dir.path().join("reps.csv");
    let out = modq(&[
        "simulate", "--model", "example1", "--reps", "5", "--horizon", "3", "--out", reps.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = read(&reps);
    assert!(text.starts_with("rep,count\n0,"));
    assert_eq!(text.lines().count(), 6);

    let fb = dir.path().join("fb.csv");
    assert!(modq(&["simulate", "--model", "feedback", "--horizon", "5", "--out", fb.to_str().unwrap()])
        .status
        .success());
    assert!(read(&fb).starts_with("time,count,x1,x2\n"));

    let draws = dir.path().join("draws.csv");
    let out = modq(&[
        "limit-sample", "--model", "example1", "--reps", "300", "--pilot", "500", "--anchor", "(2,8)",
        "--out", draws.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&draws);
    assert!(text.starts_with("state,w,poisson_count\n"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("\"(2,8)\",")));
    let hist = read(&dir.path().join("draws_hist.csv"));
    assert!(hist.starts_with("state,bin,count\n"));
    let total: u64 = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 300);

    let out = modq(&["exceedance", "--model", "example1", "--threshold", "0,3", "--reps", "200", "--pilot", "500"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["estimates"][0]["value"], 1.0);
    assert!(report["estimates"][1]["value"].as_f64().unwrap() < 1.0);
}

#[test]
fn constant_rate_commands() {
    let rates = r#"{"lambda": 3, "mu": 1.5}"#;
    let out = modq(&[
        "limit-sample", "--model", "example1", "--rates", rates, "--reps", "200", "--pilot", "300",
        "--epsilon", "1e-14",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let w: f64 = line.split(',').rev().nth(1).unwrap().parse().unwrap();
        assert!((w - 2.0).abs() < 1e-10, "{line}");
    }

    let out = modq(&[
        "moments", "--model", "example1", "--rates", rates, "--order", "2", "--pilot", "300", "--t-samples", "200",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = report["table"]["mixture"][0]["value"].as_f64().unwrap();
    assert!((mean - 2.0).abs() < 1e-9, "{mean}");
    // second raw moment of Poisson(2)
    let second = report["table"]["mixture"][1]["value"].as_f64().unwrap();
    assert!((second - 6.0).abs() < 1e-8, "{second}");

    let out = modq(&[
        "moments", "--model", "example1", "--rates", r#"{"lambda": 0, "mu": 1}"#, "--pilot", "300",
        "--t-samples", "50",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["table"]["mixture"][0]["value"], 0.0);
}

#[test]
fn intro_ctmc_time_average() {
    // λ ≡ 1, μ = (0, 1): the slow state 0 (mean sojourn 1000) lets the count
    // grow roughly linearly, the fast state 1 drains it to Poisson(1)
    let out = modq(&["simulate", "--model", "intro_ctmc", "--horizon", "20", "--reps", "400", "--seed", "3"]);
    assert!(out.status.success());
    let counts: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // starting in state 0, the environment almost surely stays there up to t = 20
    let s = MeanSe::of(&counts);
    assert!((s.mean - 20.0).abs() < 3.0 * s.std_error + 0.5, "{}", s.mean);
}

#[test]
fn transience_switches_sign_with_k() {
    let run = |k: &str| -> serde_json::Value {
        let out = modq(&[
            "transience", "--model", "feedback", "--horizon", "400", "--reps", "10", "--k", k, "--seed", "5",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    };
    let small = run("5");
    assert!(small["ci"][0].as_f64().unwrap() > 0.0);
    let large = run("100");
    assert_eq!(large["transient_regime"], false);
    assert!(large["ci"][0].as_f64().unwrap() <= 0.0 || large["mean_growth_rate"].as_f64().unwrap() < 0.05);
}
