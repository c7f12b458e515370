use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
gate = "xgate"
seed = 5

[layout]
design_length_waves = 1.0
design_height_waves = 1.0
waveguide_pitch = 0.8

[spline]
control_x = 5
control_y = 5

[optimizer]
max_iters = 2
"#;

fn rwgate(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwgate"))
        .args(args)
        .current_dir(dir)
        .env_remove("RWGATE_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn optimize_then_evaluate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let o = rwgate(&["--config", "run.toml", "--output-dir", "out", "--log-level", "warn", "optimize"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["design.ckpt", "history.csv", "gmatrix.json", "correlation.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("iteration,cost,min_success,row_0,row_1"));
    assert_eq!(history.lines().count(), 4);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 5);
    assert!(summary["tool_version"].as_str().unwrap().starts_with("rwgate "));

    let g: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("gmatrix.json")).unwrap()).unwrap();
    assert_eq!(g["g"][0][0].as_array().unwrap().len(), 2);

    let o = rwgate(&["--output-dir", "eval", "evaluate", "--design", "out/design.ckpt"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("min success"));
    let a = std::fs::read_to_string(out.join("correlation.json")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("eval/correlation.json")).unwrap();
    assert_eq!(a, b, "evaluate reproduces the optimizer's final correlations");

    let o = rwgate(&["--output-dir", "gm", "evaluate", "--design", "out/gmatrix.json"], dir.path());
    assert!(o.status.success());
    let c = std::fs::read_to_string(dir.path().join("gm/correlation.json")).unwrap();
    let (ca, cc): (serde_json::Value, serde_json::Value) =
        (serde_json::from_str(&a).unwrap(), serde_json::from_str(&c).unwrap());
    assert_eq!(ca["states"], cc["states"]);

    let o = rwgate(&["--output-dir", "fld", "export-field", "--design", "out/design.ckpt", "--port", "1"], dir.path());
    assert!(o.status.success());
    let (h, v) = rwgate::io::read_field(&dir.path().join("fld/field_1.bin")).unwrap();
    assert_eq!(v.len(), h.nx * h.ny);
    assert!(dir.path().join("fld/field_1_intensity.csv").exists());

    let o = rwgate(&["--output-dir", "sw", "sweep", "--design", "out/design.ckpt", "--points", "3"], dir.path());
    assert!(o.status.success());
    let sweep = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert!(sweep.starts_with("wavelength,gamma_0_1,gamma_0_2,gamma_1_1,gamma_1_2"));
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn zero_iterations_writes_the_initial_design() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rwgate"))
        .args(["--config", "run.toml", "optimize", "--max-iters", "0"])
        .current_dir(dir.path())
        .env("RWGATE_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("success"));
    assert!(dir.path().join("from-env/design.ckpt").exists());
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = rwgate(&["--config", "missing.toml", "optimize"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));

    std::fs::write(dir.path().join("bad.toml"), "gate = \"xgate\"\nwavelenght = 1.5\n").unwrap();
    let o = rwgate(&["--config", "bad.toml", "optimize"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wavelenght"));
    assert!(!dir.path().join("rwgate-out").exists(), "nothing written before validation");

    std::fs::write(dir.path().join("coarse.toml"), "gate = \"xgate\"\ncells_per_wavelength = 20\n").unwrap();
    let o = rwgate(&["--config", "coarse.toml", "optimize"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_check_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = rwgate(&["oracle-check", "--samples", "10"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("PASS"));
}

#[test]
fn validate_reports_each_item_and_catches_injected_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rwgate(&["validate", "--json", "--n-eff-error", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let report: rwgate::validate::ValidationReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!report.passed);
    for c in &report.checks {
        assert_eq!(c.passed, c.name != "slab_n_eff", "{c:?}");
    }
    let o = rwgate(&["validate"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), report.checks.len());
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
    for out in ["a", "b"] {
        let o = rwgate(&["--config", "run.toml", "--output-dir", out, "optimize"], dir.path());
        assert!(o.status.success());
    }
    for f in ["design.ckpt", "history.csv", "gmatrix.json", "correlation.json", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}
