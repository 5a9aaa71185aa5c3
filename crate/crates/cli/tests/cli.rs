use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mkvlab"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn metric_between_csv_measures() {
    let dir = tempfile::tempdir().unwrap();
    let (mu, nu) = (dir.path().join("mu.csv"), dir.path().join("nu.csv"));
    std::fs::write(&mu, "weight,x1\n0.5,0\n0.5,1\n").unwrap();
    std::fs::write(&nu, "weight,x1\n1.0,3\n").unwrap();
    let out = bin()
        .args(["metric", "--metric", "wpsi", "--psi", "constant:2"])
        .arg(&mu)
        .arg(&nu)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let out = bin().args(["metric", "--k", "1"]).arg(&mu).arg(&nu).output().unwrap();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["value"].as_f64().unwrap() - 2.5).abs() < 1e-12);
}

#[test]
fn simulate_and_particles_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("--config")
        .arg(configs().join("simulate_ou.json"))
        .arg("--out-dir")
        .arg(dir.path())
        .args(["simulate", "--binary"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert!(text.starts_with("t,path,x1,x2\n"));
    assert!(dir.path().join("paths.bin").exists());

    let status = bin()
        .arg("--config")
        .arg(configs().join("picard_mean_field_ou.json"))
        .arg("--out-dir")
        .arg(dir.path())
        .args(["--threads", "2", "mkv", "particle"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(std::fs::read_to_string(dir.path().join("flow.csv")).unwrap().starts_with("t,weight,x1\n"));
}

#[test]
fn picard_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(configs().join("picard_mean_field_ou.json"))
        .arg("--out-dir")
        .arg(dir.path())
        .args(["mkv", "picard"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged: true"));
    assert!(dir.path().join("state.json").exists());
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(configs().join("mean_field_ou_stability.json"))
        .arg("--out-dir")
        .arg(dir.path())
        .arg("experiment")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict: pass"));
    assert!(dir.path().join("mean_field_ou_stability.json").exists());
    assert!(dir.path().join("mean_field_ou_stability.csv").exists());

    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(configs().join("mean_field_ou_stability.json"))
        .unwrap()
        .replace("\"n_paths\": 10000", "\"n_paths\": -1");
    std::fs::write(&bad, text).unwrap();
    let out = bin().arg("--config").arg(&bad).arg("experiment").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_paths"));
}
