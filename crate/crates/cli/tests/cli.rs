use std::fs;
use std::process::{Command, Output};

use hyloc::sim::simulate_all;
use hyloc::types::{generate_network, NoiseSigmas, RssParams};

fn hyloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyloc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn sweep_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = hyloc(&[
            "sweep", "--grid", "0.5,1", "--methods", "TDRA,TA", "--trials", "6", "--baseline",
            "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read(&a).unwrap();
    assert_eq!(csv, fs::read(&b).unwrap());
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,grid_var,grid_value,rmse_m,crlb_rmse_m,mean_iters,mean_ms,failures");
    assert_eq!(lines.len(), 1 + 3 * 2);
}

#[test]
fn json_output_parses() {
    let o = hyloc(&["sweep", "--var", "radius", "--grid", "10,20", "--methods", "T", "--trials", "3", "--format", "json"]);
    assert!(o.status.success());
    let r = hyloc::harness::RmseReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(r.rows.len(), 2 * 2);
    assert_eq!(r.schema, "hyloc-report/1");
    r.check_consistency().unwrap();
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"sweep": "anchors", "grid": [5, 6], "methods": ["T"], "trials": 50, "baseline": false}"#).unwrap();
    let o = hyloc(&["sweep", "--config", cfg.to_str().unwrap(), "--trials", "2", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = hyloc::harness::RmseReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(r.config.trials, 2);
    assert_eq!(r.config.grid, Some(vec![5.0, 6.0]));
    assert_eq!(r.rows.len(), 2);
}

#[test]
fn bad_config_exits_with_2() {
    assert_eq!(hyloc(&["sweep", "--var", "nope"]).status.code(), Some(2));
    assert_eq!(hyloc(&["sweep", "--methods", "TQ"]).status.code(), Some(2));
    assert_eq!(hyloc(&["sweep", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(hyloc(&["sweep", "--format", "xml", "--trials", "1"]).status.code(), Some(2));
    assert_eq!(hyloc(&["solve", "/nonexistent/input.json"]).status.code(), Some(2));
    assert_eq!(hyloc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn solve_single_instance() {
    let g = generate_network(6, 30.0, 4).unwrap();
    let m = simulate_all(&g, &RssParams::default(), &NoiseSigmas::uniform(6, 0.01, 0.01, 0.01, 1e-4), 8).unwrap();
    let input = serde_json::json!({ "anchors": g.anchors(), "measurements": m });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instance.json");
    fs::write(&path, input.to_string()).unwrap();

    let o = hyloc(&["solve", path.to_str().unwrap(), "--eps-c", "1e-9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let est: Vec<f64> = serde_json::from_value(v["estimate"].clone()).unwrap();
    let err = ((est[0] - g.source().x).powi(2) + (est[1] - g.source().y).powi(2) + (est[2] - g.source().z).powi(2)).sqrt();
    assert!(err < 0.5, "error {err}");
    assert!(v["objective_trace"].as_array().unwrap().len() >= 2);

    let o = hyloc(&["solve", path.to_str().unwrap(), "--mask", "TA"]);
    assert!(o.status.success());

    let mut zero = m.clone();
    zero.sigma.toa[0] = 0.0;
    fs::write(&path, serde_json::json!({ "anchors": g.anchors(), "measurements": zero }).to_string()).unwrap();
    assert_eq!(hyloc(&["solve", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn crlb_table() {
    let o = hyloc(&["crlb", "--methods", "TDRA,T", "--trials", "5", "--n-anchors", "5"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "method,crlb_rmse_m,unidentifiable,geometries");
    let bound = |l: &str| l.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(bound(lines[1]) <= bound(lines[2]));
    assert_eq!(hyloc(&["crlb", "--sigma", "0"]).status.code(), Some(2));
}

#[test]
fn selftest_quick_passes() {
    let o = hyloc(&["selftest", "--quick"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}
