//! End-to-end CLI flow: init -> baseline -> run -> reports.

use std::path::Path;
use std::process::Command;

fn simcal(args: &[&str], cwd: &Path) -> (bool, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_simcal"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn simcal");
    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&output.stderr).into_owned();
    (output.status.success(), format!("{stdout}{stderr}"))
}

#[test]
fn init_run_report_flow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let (ok, out) = simcal(
        &[
            "init",
            "--out",
            "demo",
            "--experiments",
            "1,3",
            "--repeats",
            "2",
            "--max-generations",
            "6",
        ],
        root,
    );
    assert!(ok, "init failed:\n{out}");
    assert!(root.join("demo/manifest.toml").exists());
    assert!(root.join("demo/gt/task_01/wrist_rep01.csv").exists());
    assert!(root.join("demo/gt/task_03/object_rep01.csv").exists());

    let (ok, out) = simcal(&["baseline", "--manifest", "demo/manifest.toml"], root);
    assert!(ok, "baseline failed:\n{out}");
    assert!(out.starts_with("experiment,backend,baseline_fitness"));
    assert!(out.contains("engine-a") && out.contains("engine-b"));

    let (ok, out) = simcal(
        &["run", "--manifest", "demo/manifest.toml", "--workers", "2"],
        root,
    );
    assert!(ok, "run failed:\n{out}");
    assert!(out.contains("8 cells (8 executed, 0 resumed)"), "{out}");

    // Resume touches nothing.
    let (ok, out) = simcal(
        &["run", "--manifest", "demo/manifest.toml", "--resume"],
        root,
    );
    assert!(ok, "resume failed:\n{out}");
    assert!(out.contains("(0 executed, 8 resumed)"), "{out}");

    let campaign = "demo/campaign";
    let (ok, out) = simcal(&["report", "improvement", "--campaign", campaign], root);
    assert!(ok, "improvement failed:\n{out}");
    assert!(out.starts_with(
        "experiment,best_generic_backend,best_generic,best_tuned_backend,best_tuned,improvement"
    ));
    assert_eq!(out.lines().count(), 3); // header + experiments 1 and 3

    let (ok, out) = simcal(
        &[
            "report",
            "importance",
            "--campaign",
            campaign,
            "--backend",
            "engine-a",
            "--experiment",
            "3",
        ],
        root,
    );
    assert!(ok, "importance failed:\n{out}");
    assert!(out.starts_with("parameter,median,std,q1,q3,min,max,normalized_std"));
    assert_eq!(out.lines().count(), 25); // header + 24 shared parameters

    let (ok, out) = simcal(
        &[
            "report",
            "convergence",
            "--campaign",
            campaign,
            "--experiment",
            "1",
        ],
        root,
    );
    assert!(ok, "convergence failed:\n{out}");
    assert!(out.starts_with("generation,backend,mean_best_fitness"));
    // 7 generations (0..=6) per backend.
    assert_eq!(out.lines().count(), 1 + 7 * 2);
}

#[test]
fn report_on_missing_campaign_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, out) = simcal(&["report", "improvement", "--campaign", "nope"], dir.path());
    assert!(!ok);
    assert!(!out.contains("panicked"), "panic leaked to user:\n{out}");
}
