use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_levcycle"));
    c.env("LEVCYCLE_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn table1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml")
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn header(out: &Output) -> String {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    format!("{}\n", text.lines().next().unwrap_or(""))
}

/// Small invocations of every CSV-producing subcommand, keyed by golden file.
fn csv_cases() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("bifurcate.header", vec!["bifurcate", "--kind", "reduced", "--sigma-eps", "0.002", "--from", "0.3", "--to", "0.9", "--steps", "3", "--record", "4"]),
        ("skeleton.header", vec!["skeleton", "--record", "5"]),
        ("map1d.header", vec!["map1d", "--points", "5"]),
        ("lyapunov.header", vec!["lyapunov", "--kind", "reduced", "--param", "omega", "--from", "0.5", "--to", "0.9", "--steps", "3", "--iterations", "200"]),
        (
            "contour.header",
            vec!["contour", "--sigma-eps", "0.003", "--from", "80", "--to", "120", "--steps", "2", "--y-from", "1.5", "--y-to", "1.7", "--y-steps", "2"],
        ),
        ("perturb.header", vec!["perturb", "--sigma-eps", "0.2236", "--n-values", "100,1000"]),
        ("simulate.header", vec!["simulate", "--kind", "reduced", "--sigma-eps", "0.2236", "--n", "100", "--T", "20", "--seed", "4"]),
    ]
}

#[test]
fn csv_headers_match_golden_files() {
    for (name, args) in csv_cases() {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(header(&out).replace('\r', ""), golden(name), "{args:?}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    for (_, args) in csv_cases() {
        assert_eq!(run(&args).stdout, run(&args).stdout, "{args:?}");
    }
    let ens = ["ensemble", "--kind", "reduced", "--sigma-eps", "0.2236", "--n", "100", "--T", "100", "--seeds", "4"];
    assert_eq!(run(&ens).stdout, run(&ens).stdout);
}

#[test]
fn emitted_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("effective.json");
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let out = run(&[
        "simulate",
        "--config",
        table1().to_str().unwrap(),
        "--kind",
        "multivariate",
        "--M",
        "3",
        "--n",
        "50",
        "--T",
        "15",
        "--seed",
        "21",
        "--omega",
        "0.55",
        "--out",
        first.to_str().unwrap(),
        "--emit-config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    // The emitted file parses back to itself.
    let text = std::fs::read_to_string(&cfg).unwrap();
    let again = dir.path().join("again.json");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--emit-config", again.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn logistic_validation_prints_ln2() {
    let out = run(&["lyapunov", "--validate-logistic"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["lyapunov"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 0.01);
    assert_eq!(v["pass"], true);
}

#[test]
fn ensemble_json_has_summary() {
    let out = run(&["ensemble", "--kind", "reduced", "--omega", "0.4", "--sigma-eps", "0.2236", "--n", "200", "--seeds", "3", "--T", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["per_seed"].as_array().unwrap().len(), 3);
    assert!(v["mean_delta"].as_f64().unwrap() > 0.0);
    assert!(v["std_delta"].as_f64().is_some());
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = run(&["simulate", "--kind", "reduced", "--T", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["code"], "config_error");

    let out = run(&["skeleton", "--config", "/nonexistent/file.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["code"], "io_error");

    // Tiny alpha puts the 3D fixed point outside the domain: a runtime failure.
    let out = run(&["skeleton", "--alpha", "0.05", "--fixed-point"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["code"], "domain_error");
    assert_eq!(v["error"]["detail"], "no_fixed_point_in_domain");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "M = 3\nunknown_key = 2\n").unwrap();
    let out = run(&["skeleton", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["map1d", "--points", "2"]).env("LEVCYCLE_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bifurcate_rows_cover_grid() {
    let out = run(&["bifurcate", "--kind", "reduced", "--sigma-eps", "0.002", "--from", "0.3", "--to", "0.9", "--steps", "3", "--record", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.last().unwrap().contains("fixed-point"));
    for r in rows {
        assert_eq!(r.split(',').count(), 4);
    }
}
