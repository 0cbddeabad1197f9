mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::example_dir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcohinf"))
        .args(args)
        .output()
        .expect("run binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value(out: &str, key: &str) -> Option<f64> {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .map(|rest| rest.trim_start_matches(" = ").split_whitespace().next().unwrap().parse().unwrap())
}

fn config() -> String {
    path(&example_dir().join("kse.json")).to_string()
}

fn published_gains() -> String {
    path(&example_dir().join("kse_published_gains.json")).to_string()
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = bin(&["design", "--config", path(&bad), "--out", path(&dir.path().join("d.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"schema_version": 1, "model": {"instabilty": 0.4}}"#).unwrap();
    let o = bin(&["design", "--config", path(&unknown), "--out", path(&dir.path().join("d.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_files_are_io_errors() {
    let o = bin(&["verify", "--config", "/nonexistent/c.json", "--gains", "/nonexistent/g.json"]);
    assert_eq!(o.status.code(), Some(7));
}

#[test]
fn published_gains_verify_at_published_tau() {
    let o = bin(&["verify", "--config", &config(), "--gains", &published_gains()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(value(&out, "lambda_max(A)").unwrap() < 0.0);
    assert!(out.contains("sparsity: ok"));
}

#[test]
fn published_gains_simulate_below_published_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let o = bin(&["simulate", "--config", &config(), "--gains", &published_gains(), "--out", path(&csv)]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    let j = value(&out, "J").unwrap();
    assert!(j > 0.0 && j < 0.8933, "J = {j}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,x_s1,x_s2,x_f_norm,"));
    assert_eq!(text.lines().count(), 1 + 401);
}

#[test]
fn disturbance_free_run_omits_ratio() {
    let o = bin(&["simulate", "--config", &config(), "--gains", &published_gains(), "--disturbance", "none"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0));
    assert!(value(&out, "J").is_none(), "{out}");
    assert!(value(&out, "final |x_s|").unwrap() < 1e-3);
}

#[test]
fn off_pattern_gains_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(published_gains()).unwrap()).unwrap();
    v["k"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({"node": 2, "matrix": [[0.5, 0.0], [0.0, 0.0]]}));
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, v.to_string()).unwrap();
    let o = bin(&["simulate", "--config", &config(), "--gains", path(&tampered)]);
    assert_eq!(o.status.code(), Some(8));
    let o = bin(&["verify", "--config", &config(), "--gains", path(&tampered)]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stdout(&o).contains("sparsity: FAIL"));
}

#[test]
fn design_then_verify_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let o = bin(&["design", "--config", &config(), "--out", path(&a)]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(value(&out, "gamma").unwrap() <= 2.23);
    let o = bin(&["design", "--config", &config(), "--out", path(&b)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = bin(&["verify", "--config", &config(), "--gains", path(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // Forcing P = I breaks the certificate.
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let blocks = v["certificate"]["p_blocks"].as_array_mut().unwrap();
    for (i, row) in blocks.iter_mut().enumerate() {
        for (j, blk) in row.as_array_mut().unwrap().iter_mut().enumerate() {
            *blk = if i == j {
                serde_json::json!([[1.0, 0.0], [0.0, 1.0]])
            } else {
                serde_json::json!([[0.0, 0.0], [0.0, 0.0]])
            };
        }
    }
    let forced = dir.path().join("forced.json");
    std::fs::write(&forced, v.to_string()).unwrap();
    let o = bin(&["verify", "--config", &config(), "--gains", path(&forced)]);
    assert_eq!(o.status.code(), Some(6));
    assert!(value(&stdout(&o), "lambda_max(A)").unwrap() > 0.0);

    let (t1, t2) = (dir.path().join("t1.csv"), dir.path().join("t2.csv"));
    for t in [&t1, &t2] {
        let o = bin(&["simulate", "--config", &config(), "--gains", path(&a), "--out", path(t)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
}

#[test]
fn compare_prints_both_arms() {
    let o = bin(&["compare", "--config", &config()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("gamma_DCO < gamma_SO: yes"), "{out}");
    assert!(out.contains("J_DCO < J_SO: yes"), "{out}");
}

#[test]
fn single_node_config_gives_identical_arms() {
    let o = bin(&["compare", "--config", path(&example_dir().join("kse_so.json"))]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    let rows: Vec<Vec<&str>> = out
        .lines()
        .filter(|l| l.starts_with("DCO") || l.starts_with("SO"))
        .map(|l| l.split_whitespace().skip(1).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn random_disturbance_and_field_output() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.csv");
    let o = bin(&[
        "simulate",
        "--config",
        &config(),
        "--gains",
        &published_gains(),
        "--disturbance",
        "random",
        "--seed",
        "7",
        "--dt",
        "2e-4",
        "--modes",
        "16",
        "--field-out",
        path(&field),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(value(&stdout(&o), "J").is_some());
    let header = std::fs::read_to_string(&field).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 1 + 129);
}
