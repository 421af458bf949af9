use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmismc"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out-dir").arg(out).output().expect("binary runs")
}

fn smoke() -> String {
    configs().join("smoke.toml").display().to_string()
}

#[test]
fn smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", &smoke()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["records.csv", "timings.csv", "mse.csv", "summary.json", "mse.svg", "reference.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let records = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(
        lines.next(),
        Some("method,budget,realization,estimate,squared_error,cost,clamped")
    );
    // 3 methods × 2 rungs × 2 realizations
    assert_eq!(lines.count(), 12);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("method,slope,intercept,r_squared"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["run", &smoke(), "--threads", "1"], a.path()).status.success());
    assert!(run(&["run", &smoke(), "--threads", "3"], b.path()).status.success());
    let ra = std::fs::read(a.path().join("records.csv")).unwrap();
    let rb = std::fs::read(b.path().join("records.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn seed_flag_changes_the_records() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["run", &smoke()], a.path()).status.success());
    assert!(run(&["run", &smoke(), "--seed", "8"], b.path()).status.success());
    let ra = std::fs::read(a.path().join("records.csv")).unwrap();
    let rb = std::fs::read(b.path().join("records.csv")).unwrap();
    assert_ne!(ra, rb);
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn td_weights_not_summing_to_one_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("smoke.toml"))
        .unwrap()
        .replace("kind = \"toy\"", "kind = \"pde2d\"")
        .replace("truth = 0.5", "")
        .replace("s = [2.0]", "s = [2.0, 2.0]")
        .replace("beta = [4.0]", "beta = [4.0, 4.0]")
        .replace("level = [12]", "level = [3, 3]")
        .replace(
            "name = \"MLSMC\"\nn_floor = 10",
            "name = \"MLSMC\"\nn_floor = 10\nindex_set = { shape = \"total-degree\", weights = [0.5, 0.6] }",
        );
    let cfg = write_config(dir.path(), &text);
    let o = run(&["validate", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("methods[1].index_set.weights"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("smoke.toml"))
        .unwrap()
        .replace("realizations = 2", "realizations = 2\nrealisations = 3");
    let cfg = write_config(dir.path(), &text);
    let o = run(&["validate", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("realisations"));
}

#[test]
fn validate_prints_a_plan_per_rung() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", &smoke()], dir.path());
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 1 + 3 * 2);
}

#[test]
fn failure_threshold_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // levels beyond the toy model's maximum make every deterministic run fail
    let text = std::fs::read_to_string(configs().join("smoke.toml"))
        .unwrap()
        .replace("variance_constant = 0.1", "variance_constant = 0.1\nmax_relative_level = 25")
        .replace("bias_constant = 0.1", "bias_constant = 1e16")
        .replace("kind = \"budget\"\nvalues = [2e3, 8e3]", "kind = \"tolerance\"\nvalues = [0.1, 0.05]");
    let cfg = write_config(dir.path(), &text);
    let o = run(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("records.csv").exists());
}

#[test]
fn simulate_data_round_trips_through_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    let o = bin()
        .args(["simulate-data", &smoke(), "--output"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("z,y"));
    assert_eq!(text.lines().count(), 11);

    let cfg = std::fs::read_to_string(configs().join("smoke.toml"))
        .unwrap()
        .replace("truth = 0.5", "data_file = \"toy.csv\"");
    let cfg = write_config(dir.path(), &cfg);
    let a = run(&["reference", &smoke(), "--format", "json"], &dir.path().join("a"));
    let b = run(&["reference", &cfg, "--format", "json"], &dir.path().join("b"));
    let va: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let vb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(va["value"], vb["value"]);
}

#[test]
fn rates_reports_toy_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rates", &smoke()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[1] - 2.0).abs() < 1.0, "s = {}", row[1]);
    assert!((row[2] - 4.0).abs() < 1.0, "beta = {}", row[2]);
    assert_eq!(row[3], 1.0);
    assert!(dir.path().join("rates.json").exists());
}
