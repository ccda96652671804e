//! End-to-end checks of the `ddis` binary: subcommands, artifact layout, and
//! exit codes (0 success, 1 bad input, 2 verification failure, 3 I/O).

use std::path::Path;
use std::process::{Command, Output};

fn ddis(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddis"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = r#"{
        "resolution": 8,
        "obs_count": 6,
        "prior_centers": 6,
        "repeats": 2,
        "schedule": {"sigma_max": 1.0, "steps": 8},
        "langevin": {"langevin_steps": 5},
        "surrogate": {"mode_cutoff": 8},
        "spectrum_bins": 3
    }"#;
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let out = ddis(
        &["prior-sample", "--config", cfg, "--out", "prior"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("prior/prior_0000.ddf1").exists());
    assert!(dir.path().join("prior/manifest.json").exists());

    let out = ddis(
        &[
            "forward",
            "prior/prior_0000.ddf1",
            "u.ddf1",
            "--config",
            cfg,
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");

    let out = ddis(
        &["fit-surrogate", "--config", cfg, "--out", "surr"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("surr/surrogate.json").exists());

    let out = ddis(&["invert", "--config", cfg, "--out", "inv"], dir.path());
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("inv/summary.json").exists());
    assert!(dir.path().join("inv/per_repeat.csv").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rel_l2 mean"), "{stdout}");

    let out = ddis(
        &["spectrum", "u.ddf1", "spec.csv", "--config", cfg],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert!(std::fs::read_to_string(dir.path().join("spec.csv"))
        .unwrap()
        .starts_with("k,P\n"));

    let out = ddis(
        &["verify", "adjoint", "--out", "ver", "--seed", "9"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("adjoint: pass"), "{stdout}");
}

#[test]
fn bench_runs_a_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let grid = r#"{
        "base": {
            "resolution": 8, "obs_count": 6, "prior_centers": 6, "repeats": 1,
            "schedule": {"sigma_max": 1.0, "steps": 8},
            "langevin": {"langevin_steps": 5},
            "surrogate": {"mode_cutoff": 8},
            "spectrum_bins": 3
        },
        "paired_fractions": [1.0],
        "samplers": ["ddis-daps"]
    }"#;
    std::fs::write(dir.path().join("grid.json"), grid).unwrap();
    let out = ddis(&["bench", "grid.json", "--out", "bench"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("bench/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for (out_dir, seed) in [("s1", "1"), ("s2", "2"), ("s1b", "1")] {
        let out = ddis(
            &["prior-sample", "--config", cfg, "--seed", seed, "--out", out_dir],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("prior_0000.ddf1")).unwrap();
    assert_eq!(read("s1"), read("s1b"));
    assert_ne!(read("s1"), read("s2"));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"resolution": 1}"#).unwrap();
    let out = ddis(
        &["prior-sample", "--config", "bad.json", "--out", "x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{out:?}");

    std::fs::write(dir.path().join("typo.json"), r#"{"resolutoin": 16}"#).unwrap();
    let out = ddis(&["invert", "--config", "typo.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("resolutoin"), "{stderr}");

    let out = ddis(&["verify", "nonsense", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn missing_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = ddis(
        &[
            "forward",
            "no_such_field.ddf1",
            "u.ddf1",
            "--config",
            cfg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}
