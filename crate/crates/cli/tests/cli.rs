use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpm")).args(args).output().expect("binary runs")
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/p11.json")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_all_passes_on_bundled_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let res = wpm(&["run", "--config", bundled().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    let checks = r["checks"].as_array().unwrap();
    assert!(checks.len() > 40);
    assert!(checks.iter().all(|c| c["pass"] == true));
    for task in ["model-report", "ring", "ifunction", "rmatrix", "prop31", "qde", "eo", "graphsum", "thm31", "thm41", "thimble", "prop41"] {
        assert!(checks.iter().any(|c| c["task"] == task), "no checks for {task}");
    }
}

#[test]
fn critical_points_task_reports_roots_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let res = wpm(&["run", "--config", bundled().to_str().unwrap(), "--task", "critical-points", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let r = report(&out);
    assert!(r["checks"].as_array().unwrap().is_empty());
    let keys: Vec<&String> = r["data"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["critical-points.delta", "critical-points.roots"]);
    // roots of Y^2 - Y/2 - 1
    let roots = r["data"]["critical-points.roots"].as_array().unwrap();
    for z in roots {
        let x = z[0].as_f64().unwrap();
        assert!((x * x - 0.5 * x - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reports_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let cfg = bundled();
    for out in [&a, &b] {
        let res = wpm(&["run", "--config", cfg.to_str().unwrap(), "--task", "rmatrix", "--task", "qde", "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    // 17 significant digits: mantissa with 16 decimals
    assert!(text.contains("e-") && text.lines().any(|l| l.contains("\"residual\": ") && l.split(": ").nth(1).unwrap().split('e').next().unwrap().len() == 18));
}

#[test]
fn gcd_violation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"m": 2, "n": 4}, "tasks": ["rmatrix"]}"#);
    let out = dir.path().join("report.json");
    let res = wpm(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("gcd"));
    assert!(!out.exists());
}

#[test]
fn malformed_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "{not json",
        r#"{"model": {"m": 1, "n": 1}, "tasks": ["bogus"]}"#,
        r#"{"model": {"m": 1, "n": 1}, "orders": {"series": 9}}"#,
        r#"{"model": {"m": 1, "n": 1}, "orders": {"eo": [[4, 1]]}}"#,
        r#"{"model": {"m": 1, "n": 1}, "orders": {"eo": [[0, 2]]}}"#,
    ] {
        let cfg = write_config(dir.path(), body);
        assert_eq!(wpm(&["run", "--config", &cfg]).status.code(), Some(2), "{body}");
    }
    assert_eq!(wpm(&["run", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
    assert_eq!(wpm(&["run", "--config", bundled().to_str().unwrap(), "--task", "nope"]).status.code(), Some(2));
}

#[test]
fn failing_check_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"m": 2, "n": 1, "w_pos": [[0.3, 0.1], [-0.2, 0.05]], "q_neg": [[1.1, 0.3]]},
            "tolerances": {"rmatrix": 1e-30}, "tasks": ["rmatrix"]}"#,
    );
    let out = dir.path().join("report.json");
    let res = wpm(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert_eq!(r["checks"][0]["tolerance"].as_f64(), Some(1e-30));
}

#[test]
fn degenerate_model_is_captured_in_report() {
    // Y + p log Y with q_{-1} = 0 has a single critical point at Y = -p
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"m": 1, "n": 1, "w_pos": [[-0.5, 0.0]], "q_neg": [[0.0, 0.0]]}, "tasks": ["thimble"]}"#);
    let out = dir.path().join("report.json");
    let res = wpm(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let r = report(&out);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false && c["error"].is_string()));
}

#[test]
fn explain_known_and_unknown() {
    let res = wpm(&["explain", "prop31"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("large-radius") && text.contains("Bernoulli") || text.contains("B_{t+1}"));
    let res = wpm(&["explain", "thm41"]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("W_k^a"));
    assert_eq!(wpm(&["explain", "bogus"]).status.code(), Some(2));
}
