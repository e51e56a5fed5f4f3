use std::path::Path;
use std::process::{Command, Output};

fn ksns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksns")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(
        &p,
        r#"
run_id = "small"

[grid]
n = 16
box_length = 20.0

[initial]
n_floor = 1e-3

[[initial.blobs]]
center = [10.0, 10.0]
width = 3.0
amplitude = 1.0

[integrator]
dt = 0.05
t_final = 0.2
checkpoint_stride = 2
"#,
    )
    .unwrap();
    p
}

#[test]
fn check_b2_example_passes() {
    let o = ksns(&["check-b2", "--set", "model.d1=10", "--set", "model.d2=10", "--set", "b2.n0_l1=1"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("lhs = 0.100025") && text.contains("PASS"), "{text}");
}

#[test]
fn check_b2_failing_example() {
    let o = ksns(&["check-b2", "--set", "b2.n0_l1=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("lhs = 10.25"));
}

#[test]
fn missing_config_is_usage_error() {
    let o = ksns(&["simulate", "--config", "/definitely/missing.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/definitely/missing.toml"));
}

#[test]
fn unknown_flag_and_subcommand() {
    assert_eq!(ksns(&["simulate", "--bogus"]).status.code(), Some(3));
    assert_eq!(ksns(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(ksns(&[]).status.code(), Some(3));
    assert_eq!(ksns(&["simulate", "--set", "model.nothing=1"]).status.code(), Some(3));
}

#[test]
fn simulate_zero_horizon_writes_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = ksns(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "integrator.t_final=0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut snaps: Vec<String> = std::fs::read_dir(out.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    snaps.sort();
    assert_eq!(snaps, ["c_000000.ksns", "n_000000.ksns", "ux_000000.ksns", "uy_000000.ksns"]);
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(out.join("summary.json").exists());
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        let o = ksns(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "noise.kind=linear_multiplicative",
            "--set",
            "noise.strength=0.1",
            "--set",
            "initial.u0_energy=0.01",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("diagnostics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let header = String::from_utf8_lossy(&csvs[0]).lines().next().unwrap().to_string();
    assert!(header.starts_with("time,mass_n,min_n"));
    assert!(header.ends_with("blow_up"));
}

#[test]
fn blowup_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = ksns(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "integrator.blowup_threshold=1e-6",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ensemble_and_uniqueness_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("ens");
    let o = ksns(&["ensemble", "--config", c, "--set", "ensemble.n_members=2", "--threads", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("ensemble.csv").exists() && out.join("member_0001/diagnostics.csv").exists());
    let out = dir.path().join("uq");
    let o = ksns(&["uniqueness", "--config", c, "--out", out.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("twins identical true"), "{text}");
    assert!(out.join("uniqueness.csv").exists());
}

#[test]
fn validate_reports_checks() {
    let o = ksns(&["validate", "--set", "initial.n_floor=1e-3"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("A2-2 chi > 0"), "{text}");
    assert!(text.contains("B2 diffusion condition"));
    // unit diffusions violate the second set of hypotheses
    assert_eq!(o.status.code(), Some(1));
}
