use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sparseode(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparseode"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn simulate_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparseode(&["simulate", "--system", "spiral", "--noise", "0.01", "--out", "traj.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,x1,x2"));
    // 20 time units at step 0.05, both ends included.
    assert_eq!(text.lines().count(), 402);
}

#[test]
fn fit_from_csv_uses_library_term_names() {
    let dir = tempfile::tempdir().unwrap();
    sparseode(&["simulate", "--system", "spiral", "--out", "traj.csv"], dir.path());
    let out = sparseode(
        &["fit", "--input", "traj.csv", "--degree", "2", "--methods", "lasso,debiased_lasso", "--out", "res"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("res/coefficients.csv")).unwrap();
    let terms = ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"];
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 2 * terms.len());
    for row in rows {
        let term = row.split(',').nth(2).unwrap();
        assert!(terms.contains(&term), "{term}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"system": "spiral", "noise": 0.2, "methods": ["stls"], "seed": 4, "degree": 2}"#,
    )
    .unwrap();
    let out = sparseode(&["fit", "--config", "cfg.json", "--noise", "0.05", "--out", "res"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let echoed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/config.json")).unwrap()).unwrap();
    assert_eq!(echoed["system"], "spiral");
    assert_eq!(echoed["noise"], 0.05);
    assert_eq!(echoed["seed"], 4);
    assert_eq!(echoed["methods"], serde_json::json!(["stls"]));
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = sparseode(
        &[
            "sweep", "--system", "spiral", "--noise", "0.01,0.02", "--replicates", "2", "--methods", "stls,lasso",
            "--degree", "2", "--out", "sw",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert!(sweep.starts_with("grid_var,grid_value,method,dim,term,sel_freq,success_rate,n_ok\n"));
    // Six terms per dimension plus a system row, per grid value and method.
    assert_eq!(sweep.lines().count(), 1 + 2 * 2 * (2 * 6 + 1));
    let out = sparseode(&["plot", "--input", "sw"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sw/sweep_dim1.svg").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sparseode(&["fit", "--methods", "ridge"], dir.path())), 1);
    assert_eq!(code(&sparseode(&["simulate", "--system", "lorenz"], dir.path())), 1);
    assert_eq!(code(&sparseode(&["fit", "--input", "missing.csv"], dir.path())), 1);
    assert_eq!(code(&sparseode(&["plot", "--input", "."], dir.path())), 1);
    fs::write(dir.path().join("blocker"), b"").unwrap();
    assert_eq!(code(&sparseode(&["sweep", "--out", "blocker/sub"], dir.path())), 1);
    // A stiff oscillator with a huge step blows up.
    let out = sparseode(&["simulate", "--mu", "1000", "--step", "0.5"], dir.path());
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
