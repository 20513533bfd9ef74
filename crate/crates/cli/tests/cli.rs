use std::path::Path;
use std::process::{Command, Output};

fn robustbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustbf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = robustbf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_validate_and_solve() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let inst_s = inst.to_str().unwrap();
    ok(&["sample", "--m", "2", "--k", "1", "--n", "2", "--seed", "4", "--eps", "0.1", "--out", inst_s]);
    assert!(ok(&["validate", inst_s]).contains("instance ok"));

    let mm = dir.path().join("maxmin.json");
    ok(&["maxmin", "--instance", inst_s, "--tol", "1e-3", "--out", mm.to_str().unwrap()]);
    let mm = json(&mm);
    let mm_rate = mm["min_rate"].as_f64().unwrap();
    assert!(mm_rate > 0.0);
    assert_eq!(mm["precoders"].as_array().unwrap().len(), 2);

    let log = dir.path().join("events.jsonl");
    let d = ok(&["distributed", "--instance", inst_s, "--method", "alg2", "--log", log.to_str().unwrap()]);
    let d: serde_json::Value = serde_json::from_str(&d).unwrap();
    assert!(d["min_rate"].as_f64().unwrap() <= mm_rate * (1.0 + 1e-3) + 1e-9);
    assert!(std::fs::read_to_string(&log).unwrap().lines().count() >= 2);

    let zf = ok(&["baseline", "--instance", inst_s, "--kind", "zf-maxmin"]);
    let zf: serde_json::Value = serde_json::from_str(&zf).unwrap();
    assert_eq!(zf["algo"], "zf_maxmin");
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"network":{"m":1,"k":1,"n":2},"eps":[0.0,0.1],"gamma_db":[0.0,10.0],"seeds":[0,1],"algorithms":["maxmin","zf_maxmin"]}"#,
    )
    .unwrap();
    let csv = dir.path().join("rows.csv");
    ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);
    assert!(text.starts_with("seed,eps,gamma_db,algo,min_rate,sum_rate,per_user_rates,wall_ms,iters\n"));

    let figs = dir.path().join("figs");
    ok(&["plot", csv.to_str().unwrap(), "--out", figs.to_str().unwrap()]);
    for f in ["normalized_min_rate.svg", "min_rate_vs_snr.svg", "sum_rate_vs_snr.svg"] {
        assert!(std::fs::read_to_string(figs.join(f)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"config\":").unwrap();
    let out = robustbf(&["validate", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
    assert!(!robustbf(&["sweep"]).status.success());
}
