//! End-to-end tests of the `sa` binary: exit codes, file determinism, and
//! the check/sweep surfaces.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sa"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_sa(args: &[&str]) -> Output {
    sa().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const QUICK_QUADRATIC: &str = r#"
[experiment]
algorithm = "sgd_passive"
seed = 7
max_iters = 3000
record_interval = 50
tolerance = 1e-4
out = "traj.csv"

[model]
key = "quadratic"

[schedule]
family = "darken"
gamma0 = 0.5
tau = 50.0
"#;

#[test]
fn run_writes_trajectory_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let out = dir.path().join("traj.csv");
    let output = run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("final_loss="), "{stdout}");
    assert!(stdout.contains("converged="), "{stdout}");
    assert!(stdout.contains("wall_s="), "{stdout}");
    assert!(out.exists());
}

#[test]
fn quiet_suppresses_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let out = dir.path().join("traj.csv");
    let output = run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(output.status.success());
    assert!(output.stdout.is_empty());
}

#[test]
fn identical_config_and_seed_give_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let output = run_sa(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert!(output.status.success());
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b);
    assert!(!a.is_empty());
}

#[test]
fn seed_override_changes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--quiet",
    ]);
    run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        out_b.to_str().unwrap(),
        "--quiet",
    ]);
    assert_ne!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
}

#[test]
fn max_iters_one_yields_exactly_two_data_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "one.toml",
        &QUICK_QUADRATIC.replace("max_iters = 3000", "max_iters = 1"),
    );
    let out = dir.path().join("one.csv");
    let output = run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(output.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3, "header + two records: {text}");
}

#[test]
fn unknown_registry_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.toml",
        &QUICK_QUADRATIC.replace("key = \"quadratic\"", "key = \"cubic\""),
    );
    let output = run_sa(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("cubic"), "{stderr}");
}

#[test]
fn divergent_run_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("divergent.toml");
    let out = dir.path().join("div.csv");
    let output = run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("A2 violated"), "{stderr}");
    // the trajectory up to the violation is still written
    assert!(out.exists());
}

#[test]
fn out_dir_env_redirects_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let output = sa()
        .args(["run", "--config", config.to_str().unwrap(), "--quiet"])
        .env("SA_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    assert!(dir.path().join("traj.csv").exists());
}

#[test]
fn check_schedule_passes_darken_and_fails_constant() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let output = run_sa(&["check", "--config", config.to_str().unwrap(), "schedule"]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("sum_diverges=true"), "{stdout}");
    assert!(stdout.contains("sum_squares_converges=true"), "{stdout}");

    let constant = write_config(
        dir.path(),
        "c.toml",
        &QUICK_QUADRATIC
            .replace("family = \"darken\"", "family = \"constant\"")
            .replace("tau = 50.0", ""),
    );
    let output = run_sa(&["check", "--config", constant.to_str().unwrap(), "schedule"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn check_gradient_passes_on_the_cd_testbed() {
    let config = configs_dir().join("cd.toml");
    let output = run_sa(&["check", "--config", config.to_str().unwrap(), "gradient"]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("check: pass"), "{stdout}");
}

#[test]
fn check_downhill_fails_with_flipped_direction() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let output = run_sa(&["check", "--config", config.to_str().unwrap(), "downhill"]);
    assert!(output.status.success(), "{output:?}");

    let flipped = write_config(
        dir.path(),
        "f.toml",
        &QUICK_QUADRATIC.replace(
            "out = \"traj.csv\"",
            "out = \"traj.csv\"\nflip_direction = true",
        ),
    );
    let output = run_sa(&["check", "--config", flipped.to_str().unwrap(), "downhill"]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn sweep_reports_per_seed_and_is_order_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let out = dir.path().join("sweep.csv");
    let output = run_sa(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "3,1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("fraction_converged=1.000"), "{stdout}");
    // outputs ordered by seed
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("seed=1"), "{stdout}");
    assert!(lines[1].starts_with("seed=2"), "{stdout}");
    assert!(lines[2].starts_with("seed=3"), "{stdout}");
    for seed in [1, 2, 3] {
        assert!(dir.path().join(format!("sweep_seed{seed}.csv")).exists());
    }

    // permuting the seed list leaves each per-seed file unchanged
    let before: Vec<Vec<u8>> = (1..=3)
        .map(|s| std::fs::read(dir.path().join(format!("sweep_seed{s}.csv"))).unwrap())
        .collect();
    let output = run_sa(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "2,3,1",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(output.status.success());
    for (i, seed) in (1..=3).enumerate() {
        let after = std::fs::read(dir.path().join(format!("sweep_seed{seed}.csv"))).unwrap();
        assert_eq!(before[i], after, "seed {seed}");
    }
}

#[test]
fn ten_seed_sweep_converges_on_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let out = dir.path().join("ten.csv");
    let output = run_sa(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "1,2,3,4,5,6,7,8,9,10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("fraction_converged=1.000"), "{stdout}");
}

#[test]
fn single_seed_sweep_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUICK_QUADRATIC);
    let run_out = dir.path().join("run.csv");
    run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        run_out.to_str().unwrap(),
        "--quiet",
    ]);
    let sweep_out = dir.path().join("s.csv");
    run_sa(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "7",
        "--out",
        sweep_out.to_str().unwrap(),
        "--quiet",
    ]);
    let a = std::fs::read(&run_out).unwrap();
    let b = std::fs::read(dir.path().join("s_seed7.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn shipped_cd_config_converges() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("cd.toml");
    let out = dir.path().join("cd.csv");
    let output = run_sa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("converged=true"), "{stdout}");
}
