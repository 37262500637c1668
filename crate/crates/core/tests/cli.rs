use std::fs;
use std::path::Path;
use std::process::Command;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (i32, std::path::PathBuf) {
    let cfg = dir.join(format!("{sub}-{}.json", extra.join("_").replace(['-', '/'], "")));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}-{}", fs::read_dir(dir).unwrap().count()));
    let status = Command::new(env!("CARGO_BIN_EXE_borderlab"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (status.status.code().unwrap_or(-1), out)
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

const FLOW: &str = r#"{"command": "flow", "seed": 1, "field": "ex31", "x0": [0.75], "horizon": 2.0, "step": 0.01}"#;

#[test]
fn flow_run_ends_on_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "flow", FLOW, &[]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("flow.csv")).unwrap();
    assert!(csv.starts_with("t,x1,delta_K\n"));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 1.0).abs() < 1e-5 && last[2].abs() <= 1e-9);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["field"], "ex31");
}

#[test]
fn invalid_configs_exit_with_two_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let negative = FLOW.replace("0.01", "-0.01");
    let (code, out) = run(dir.path(), "flow", &negative, &[]);
    assert_eq!(code, 2);
    assert!(!out.exists());
    let unknown = FLOW.replace("\"seed\": 1", "\"seed\": 1, \"sede\": 2");
    assert_eq!(run(dir.path(), "flow", &unknown, &[]).0, 2);
    let unseeded = FLOW.replace("\"seed\": 1, ", "");
    assert_eq!(run(dir.path(), "flow", &unseeded, &[]).0, 2);
    assert_eq!(run(dir.path(), "flow", &unseeded, &["--seed", "3"]).0, 0);
    assert_eq!(run(dir.path(), "zeta", FLOW, &[]).0, 2);
}

#[test]
fn numeric_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // start outside the domain: the flow refuses it
    let cfg = r#"{"command": "zeta", "seed": 1, "field": "ex36", "domain": {"kind": "interval", "lo": 0, "hi": 0.1}, "eps_min": 1e-5, "component": 7}"#;
    let (code, _) = run(dir.path(), "zeta", cfg, &[]);
    assert_eq!(code, 3);
}

#[test]
fn identical_seed_gives_identical_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "sde", "seed": 5, "coefficients": {"kind": "ou", "dim": 2, "theta": 1.0, "sigma": 0.5},
                  "x0": [0.5, 0.0], "horizon": 1.0, "step": 0.01, "n_paths": 200, "deltas": [0.2, 0.1]}"#;
    let (c1, a) = run(dir.path(), "sde", cfg, &["--workers", "1"]);
    let (c2, b) = run(dir.path(), "sde", cfg, &["--workers", "2"]);
    let (c3, c) = run(dir.path(), "sde", cfg, &["--seed", "6"]);
    assert_eq!((c1, c2, c3), (0, 0, 0));
    let (ma, mb, mc) = (manifest(&a), manifest(&b), manifest(&c));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_ne!(ma["outputs"][0], mc["outputs"][0]);
    let header = |p: &Path| fs::read_to_string(p.join("sde.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header(&a), header(&c));
    assert!(ma["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn phage_and_pdmp_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(dir.path(), "phage", r#"{"command": "phage", "seed": 2, "n_paths": 100, "horizon": 10}"#, &[]);
    assert_eq!(code, 0);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["results"]["hit_count"], 0);
    assert_eq!(s["results"]["configs"][0]["boundary_check"]["satisfied"], true);

    let pdmp = r#"{"command": "pdmp", "seed": 2, "modes": [
        {"name": "out", "drift_matrix": [[1, 0], [0, 1]], "drift_offset": [0, 0], "rate": 1},
        {"name": "in", "drift_matrix": [[-1, 0], [0, -1]], "drift_offset": [0, 0], "rate": 1}],
        "transition": [[0, 1], [1, 0]], "domain": {"kind": "ball", "center": [0, 0], "radius": 1},
        "x0": [0.2, 0.1], "horizon": 2, "step": 0.01}"#;
    let (code, out) = run(dir.path(), "pdmp", pdmp, &[]);
    assert_eq!(code, 0);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["results"]["boundary_check"]["satisfied"], false);
    assert_eq!(s["results"]["boundary_check"]["worst"]["mode"], 0);
    assert!(fs::read_to_string(out.join("pdmp.csv")).unwrap().starts_with("t,mode_index,x1,x2,delta_K\n"));
}
