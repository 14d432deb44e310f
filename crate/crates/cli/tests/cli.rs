//! End-to-end runs of the binary against small configs.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracmono"))
}

const SMALL_CONFIG: &str = r#"
scenario = "smoke16"
seed = 9

[grid]
n_dims = 1
cells_per_axis = 16
half_width = 1.0

[geometry]
omega = { lo = [-0.5], hi = [0.5] }
windows = [{ lo = [0.7], hi = [0.9] }]

[conductivity]
lambda = 0.4
background = 1.0

[fractional]
orders = [0.5]

[ymesh]
intervals = 24

[mono]
pairs = 2
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn mono_test_equal_pair_reports_zero_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["mono-test", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    // configured pair is (sigma, sigma): all three sandwich terms collapse
    let list = metrics["metrics"].as_array().unwrap();
    for name in [
        "configured_pair_lower_s0p5",
        "configured_pair_middle_s0p5",
        "configured_pair_upper_s0p5",
    ] {
        let m = list.iter().find(|m| m["name"] == name).unwrap();
        assert!(m["value"].as_f64().unwrap().abs() <= 1e-10, "{name}: {m}");
    }
    assert!(out.join("provenance.json").exists());
    assert!(out.join("sandwich.csv").exists());
}

#[test]
fn extension_check_writes_refinement_trend() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["extension-check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let curve = fs::read_to_string(out.join("trace_refinement_s0p5.csv")).unwrap();
    assert!(curve.lines().count() >= 4); // header + 3 levels
    let metrics = fs::read_to_string(out.join("metrics.json")).unwrap();
    assert!(metrics.contains("trace_rel_error_s0p5"));
    assert!(metrics.contains("energy_identity_gap_s0p5"));
}

#[test]
fn malformed_config_exits_one_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    // window missing entirely
    let bad = SMALL_CONFIG.replace("windows = [{ lo = [0.7], hi = [0.9] }]", "windows = []");
    let cfg = write_config(tmp.path(), &bad);
    let out = bin()
        .args(["forward", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("window"), "stderr: {err}");
}

#[test]
fn unknown_command_exits_one_with_usage() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "stderr: {err}");
}

#[test]
fn deterministic_outputs_for_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let mut bytes = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("out{run}"));
        let status = bin()
            .args(["forward", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "42"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        let mut blob = fs::read(out.join("metrics.json")).unwrap();
        blob.extend(fs::read(out.join("u_s0p5.csv")).unwrap());
        blob.extend(fs::read(out.join("provenance.json")).unwrap());
        bytes.push(blob);
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn dnmap_writes_matrix_with_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["dnmap", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("dn_s0p5.csv")).unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("dn_s0p5.json")).unwrap()).unwrap();
    let w = sidecar["window_cells"].as_array().unwrap().len();
    assert_eq!(csv.lines().count(), w);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), w);
}

#[test]
fn workspace_sample_configs_parse() {
    // the shipped configs stay loadable
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map_or(false, |e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            let parsed: Result<toml::Value, _> = toml::from_str(&text);
            assert!(parsed.is_ok(), "{} does not parse", path.display());
        }
    }
}
