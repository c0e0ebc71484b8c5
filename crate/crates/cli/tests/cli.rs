use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rddid::io::{read_observations, write_observations};
use rddid::Observation;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rddid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rddid"))
        .current_dir(root())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Same keys everywhere; numbers equal to 1e-9 relative.
fn same_shape(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let kx: Vec<_> = x.keys().collect();
            let ky: Vec<_> = y.keys().collect();
            assert_eq!(kx, ky, "keys differ at {path}");
            for k in x.keys() {
                same_shape(&x[k], &y[k], &format!("{path}.{k}"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "length differs at {path}");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                same_shape(u, v, &format!("{path}[{i}]"));
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{path}: {x} vs {y}");
        }
        _ => assert_eq!(a, b, "value differs at {path}"),
    }
}

#[test]
fn estimate_matches_golden_json() {
    let out = rddid(&["estimate", "--config", "data/example.conf"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let got: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let golden: Value = serde_json::from_str(include_str!("golden/estimate.json")).unwrap();
    same_shape(&got, &golden, "$");
    for key in ["point", "se", "ci_lower", "ci_upper", "scheme"] {
        assert!(got.get(key).is_some(), "missing {key}");
    }
    assert!(stderr(&out).contains("conventional"));
}

#[test]
fn flags_override_config() {
    let out = rddid(&[
        "estimate",
        "--config",
        "data/example.conf",
        "--fit.h",
        "0.3",
        "--sampling",
        "CS",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let got: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(got["scheme"], "CS");
    let golden: Value = serde_json::from_str(include_str!("golden/estimate.json")).unwrap();
    assert_ne!(got["point"], golden["point"]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "input = data/example_panel.csv\nfit.bandwith = 0.5\n").unwrap();
    let out = rddid(&["estimate", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[config]"), "{}", stderr(&out));
    assert!(stderr(&out).contains("fit.bandwith"));
}

#[test]
fn bad_csv_reports_category_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(
        &csv,
        "unit_id,period,running,treated,outcome\nu1,1,0.5,1,2\nu2,1,0.5,2,2\n",
    )
    .unwrap();
    let out = rddid(&[
        "estimate",
        "--input",
        csv.to_str().unwrap(),
        "--cutoff",
        "0",
        "--taxonomy.rd",
        "1",
        "--taxonomy.target",
        "1",
        "--fit.h",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("error[data]") && err.contains("line 3"), "{err}");
}

#[test]
fn simulate_requires_seed() {
    let out = rddid(&["simulate", "--simulate.grid", "CS:200:200", "--simulate.reps", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("simulate.seed"));
}

#[test]
fn simulate_writes_coverage_csv() {
    let args = [
        "simulate",
        "--simulate.seed",
        "11",
        "--simulate.grid",
        "CS:300:600,PV:300:600",
        "--simulate.reps",
        "20",
    ];
    let a = rddid(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let body = stdout(&a);
    let mut lines = body.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("dgp,n,h"), "{header}");
    assert_eq!(lines.count(), 2);
    // reruns with the same seed are identical
    assert_eq!(stdout(&rddid(&args)), body);
}

fn pc_copy(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(root().join("data/example_panel.csv")).unwrap();
    let obs = read_observations(text.as_bytes()).unwrap();
    let mut first = std::collections::HashMap::new();
    let pc: Vec<Observation> = obs
        .iter()
        .map(|o| {
            let r = *first.entry(o.unit.clone()).or_insert(o.running);
            let treated = o.period == 2003 && r >= 0.0;
            Observation::new(o.unit.clone(), o.period, r, treated, o.outcome)
        })
        .collect();
    let path = dir.join("pc.csv");
    write_observations(&pc, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn composition_on_pc_is_zero_with_note() {
    let dir = tempfile::tempdir().unwrap();
    let csv = pc_copy(dir.path());
    let out = rddid(&[
        "composition",
        "--config",
        "data/example.conf",
        "--input",
        csv.to_str().unwrap(),
        "--sampling",
        "PC",
        "--composition.baseline",
        "2002",
        "--composition.alt_period",
        "2003",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["point"].as_f64(), Some(0.0));
    assert_eq!(v["notes"].as_array().unwrap().len(), 1);
}

#[test]
fn density_warns_when_omitting_switchers() {
    let base = [
        "density",
        "--config",
        "data/example.conf",
        "--density.period",
        "2003",
        "--density.bin_width",
        "0.25",
    ];
    let plain = rddid(&base);
    assert!(plain.status.success());
    assert!(!stderr(&plain).contains("warning"));
    let mut args = base.to_vec();
    args.extend(["--density.omit_switchers", "true"]);
    let omit = rddid(&args);
    assert!(omit.status.success());
    assert!(stderr(&omit).contains("warning: omitting switchers"));
    assert!(stdout(&omit).starts_with("lower,upper,count,switchers\n"));
}

#[test]
fn switchers_and_event_study_tables() {
    let out = rddid(&[
        "switchers",
        "--config",
        "data/example.conf",
        "--switchers.period_a",
        "2002",
        "--switchers.period_b",
        "2003",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = stdout(&out);
    let rows = body.lines().skip(1).count();
    assert!(stderr(&out).starts_with(&format!("{rows} of 500 units switch")));

    let out = rddid(&["event-study", "--config", "data/example.conf"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 5);
}

#[test]
fn equivalence_uses_default_margin() {
    let out = rddid(&[
        "equivalence",
        "--config",
        "data/example.conf",
        "--equivalence.period_a",
        "2000",
        "--equivalence.period_b",
        "2002",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let delta = v["delta"].as_f64().unwrap();
    let sd = v["outcome_sd"].as_f64().unwrap();
    assert!((delta - 0.36 * sd).abs() < 1e-12);
}

#[test]
fn output_key_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("est.json");
    let out = rddid(&[
        "estimate",
        "--config",
        "data/example.conf",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(v["point"].is_number());
}
