use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasehyst"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn small(h: &str, g: &str) -> serde_json::Value {
    serde_json::json!({
        "model": {
            "kappa": 1.0, "lambda": 0.05, "period": 1.0, "dt": 0.01,
            "grid": {"length": 1.0, "n_interior": 16},
            "h": h, "g": g, "lipschitz_g_u": 0.0, "lipschitz_g_v": 0.0
        },
        "solver": {"tol": 1e-10}
    })
}

#[test]
fn simulate_zero_config_writes_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", configs().join("zero.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_digest: "));
    assert_eq!(lines.next().unwrap(), "t,x,u,v");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 101 * 16);
    assert!(rows.iter().all(|r| r.ends_with(",0,0")));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert!(csv.starts_with(&format!("# config_digest: {}", manifest["config_digest"].as_str().unwrap())));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small("sin(2*pi*t)", "8*cos(2*pi*t) - 0.5*v"));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push((fs::read(out.join("trajectory.csv")).unwrap(), fs::read(out.join("manifest.json")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\"model\": {\"kappa\": 1,,}").unwrap();
    let o = run(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 1 column"), "{}", stderr(&o));

    let mut v = small("0", "0");
    v["model"]["kappa"] = (-2.0).into();
    let p = write_config(dir.path(), "neg.json", &v);
    let o = run(&["simulate", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model.kappa"), "{}", stderr(&o));

    let o = run(&["simulate", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "div.json", &small("1/u", "0"));
    let o = run(&["simulate", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn find_periodic_zero_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["find-periodic", "--config", configs().join("zero.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("periodic_report.json")).unwrap()).unwrap();
    assert_eq!(r["report"]["iterations"], 1);
    assert_eq!(r["report"]["converged"], true);
}

#[test]
fn find_periodic_not_converged_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("sin(2*pi*t)", "0");
    v["solver"] = serde_json::json!({"tol": 1e-14, "max_iter": 2});
    let p = write_config(dir.path(), "nc.json", &v);
    let o = run(&["find-periodic", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("periodic_report.json")).unwrap()).unwrap();
    assert_eq!(r["report"]["converged"], false);
    assert_eq!(r["report"]["iterations"], 2);
}

#[test]
fn h1_violation_warns_and_proceeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("0", "12*v");
    v["model"]["lipschitz_g_v"] = 12.0.into();
    v["model"]["lambda"] = "off".into();
    v["solver"] = serde_json::json!({"tol": 1e-8, "max_iter": 3});
    let p = write_config(dir.path(), "h1.json", &v);
    let o = run(&["find-periodic", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(stderr(&o).contains("warning: (H1) violated"), "{}", stderr(&o));
    assert!(matches!(code(&o), 0 | 4));
}

#[test]
fn canonical_find_periodic_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["find-periodic", "--config", configs().join("canonical.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("periodic_report.json")).unwrap()).unwrap();
    let hist = r["report"]["residual_history"].as_array().unwrap();
    assert!(hist.last().unwrap().as_f64().unwrap() <= r["report"]["tolerance"].as_f64().unwrap());
    assert!(r["schauder"]["sup_distance_to_picard"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn sweep_rows_and_single_value_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("sin(2*pi*t)", "30*sin(2*pi*t)");
    v["sweep"] = serde_json::json!({"parameter": "lambda", "values": [0.1, 0.01, 0.001]});
    let p = write_config(dir.path(), "s.json", &v);
    let out = dir.path().join("sweep");
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_digest: "));
    assert!(lines[1].starts_with("lambda,status,"));
    assert_eq!(lines.len(), 2 + 3);
    let viol: Vec<f64> = lines[2..].iter().map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(viol[0] > viol[1] && viol[1] > viol[2], "{viol:?}");

    v["sweep"] = serde_json::json!({"parameter": "lambda", "values": [0.05]});
    let p = write_config(dir.path(), "one.json", &v);
    let out1 = dir.path().join("one");
    assert_eq!(code(&run(&["sweep", "--config", p.to_str().unwrap(), "--out", out1.to_str().unwrap()])), 0);
    let out2 = dir.path().join("fp");
    assert_eq!(code(&run(&["find-periodic", "--config", p.to_str().unwrap(), "--out", out2.to_str().unwrap()])), 0);
    let row: serde_json::Value = serde_json::from_str(&fs::read_to_string(out1.join("sweep.json")).unwrap()).unwrap();
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(out2.join("periodic_report.json")).unwrap()).unwrap();
    let row = &row["rows"][0];
    assert_eq!(row["iterations"], rep["report"]["iterations"]);
    assert_eq!(row["constraint"], rep["constraint"]);
    assert_eq!(row["norms"], rep["norms"]);
}

#[test]
fn sweep_records_point_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("0", "0");
    v["sweep"] = serde_json::json!({"parameter": "dt", "values": [0.01, 0.003]});
    let p = write_config(dir.path(), "s.json", &v);
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("0.01,ok,"));
    assert!(csv.lines().nth(3).unwrap().starts_with("0.003,config_error,"));

    let p = write_config(dir.path(), "nosweep.json", &small("0", "0"));
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`sweep`"));
}

#[test]
fn check_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", "--suite", "hysteresis", "--seed", "42", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("check_hysteresis.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["checks"][0]["details"]["tuples"], 100_000);

    let o = run(&["check", "--suite", "spatial"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["suite"], "spatial");

    let o = run(&["check", "--suite", "bogus"]);
    assert_eq!(code(&o), 2);
}
