use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "nx = 2\nny = 2\np1 = 4\np2 = 4\ntolerance = 1e-8\nn_max = 6\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgsem-tau"))
        .current_dir(dir)
        .env_remove("DGSEM_TAU_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

#[test]
fn verify_source_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(dir.path(), &["verify-source"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));
    let report = fs::read_to_string(dir.path().join("output/source_check.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().ends_with(",true"));

    let bad = run(dir.path(), &["verify-source", "--flip-exponent"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("max mismatch"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--set", "p1=0", "solve"][..],
        &["--set", "unknown_key=3", "solve"],
        &["--set", "flavor=sideways", "solve"],
        &["--config", "missing.toml", "solve"],
        &["no-such-command"],
    ] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(
        dir.path(),
        &["--config", &cfg, "--set", "max_iterations=10", "solve"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("output/residual_history.csv").exists());
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let via_env = Command::new(env!("CARGO_BIN_EXE_dgsem-tau"))
        .current_dir(dir.path())
        .env("DGSEM_TAU_OUTPUT_DIR", "from_env")
        .arg("verify-source")
        .output()
        .unwrap();
    assert!(via_env.status.success());
    assert!(dir.path().join("from_env/source_check.csv").exists());

    let via_flag = Command::new(env!("CARGO_BIN_EXE_dgsem-tau"))
        .current_dir(dir.path())
        .env("DGSEM_TAU_OUTPUT_DIR", "from_env2")
        .args(["--output-dir", "from_flag", "verify-source"])
        .output()
        .unwrap();
    assert!(via_flag.status.success());
    assert!(dir.path().join("from_flag/source_check.csv").exists());
    assert!(!dir.path().join("from_env2").exists());
}

#[test]
fn map_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut runs = Vec::new();
    for (k, jobs) in ["1", "3"].iter().enumerate() {
        let out_dir = format!("run{k}");
        let out = run(
            dir.path(),
            &[
                "--config",
                &cfg,
                "--jobs",
                jobs,
                "--output-dir",
                &out_dir,
                "map",
            ],
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        runs.push(fs::read(dir.path().join(&out_dir).join("map_element0.csv")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs.remove(0)).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("element_id,N1,N2,tau,flavor,method,provenance")
    );
    for method in ["exact", "high-order", "low-order", "full-product"] {
        assert!(
            text.lines().any(|l| l.contains(&format!(",{method},"))),
            "{method}"
        );
    }
}

#[test]
fn sweep_and_adapt_from_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(
        run(dir.path(), &["--config", &cfg, "solve"]).status.code(),
        Some(0)
    );
    let snapshot = dir.path().join("output/solution.dat").display().to_string();

    let sweep = run(
        dir.path(),
        &[
            "--config",
            &cfg,
            "--set",
            "thresholds_per_decade=1",
            "sweep",
            "--no-resolve",
            "--solution",
            &snapshot,
        ],
    );
    assert_eq!(
        sweep.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    let table = fs::read_to_string(dir.path().join("output/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.starts_with("tau_max,total_dofs,achieved_non_isolated,achieved_isolated"));
    let plans = fs::read_to_string(dir.path().join("output/sweep_plans.csv")).unwrap();
    assert_eq!(plans.lines().count(), 1 + 6 * 4);

    let adapt = run(
        dir.path(),
        &[
            "--config",
            &cfg,
            "adapt",
            "--tau-max",
            "1e-2",
            "--flavor",
            "isolated",
            "--solution",
            &snapshot,
        ],
    );
    assert_eq!(
        adapt.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&adapt.stderr)
    );
    let plan = fs::read_to_string(dir.path().join("output/plan.csv")).unwrap();
    assert_eq!(
        plan.lines().next(),
        Some("element_id,N1,N2,dofs,predicted_tau")
    );
    assert_eq!(plan.lines().count(), 5);
    let row = fs::read_to_string(dir.path().join("output/adapt.csv")).unwrap();
    assert!(row.lines().nth(1).unwrap().contains(",true,"), "{row}");
}
