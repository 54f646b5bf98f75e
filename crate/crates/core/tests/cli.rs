use std::path::Path;
use std::process::{Command, Output};

use entroprod::cli::config::{resolve, Experiment};
use entroprod::cli::{predict, EXIT_CERTIFICATE, EXIT_CONFIG, EXIT_PASS, MEMORY_CAP_BYTES};

fn entroprod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entroprod")).args(args).env_remove("ENTROPROD_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn default_configs_validate_clean() {
    for exp in Experiment::ALL {
        let (cfg, errors) = resolve(exp, None, &[], None);
        assert!(errors.is_empty(), "{exp}: {errors:?}");
        let v = predict(&cfg);
        assert!(v.diagnostics.is_empty(), "{exp}: {:?}", v.diagnostics);
        assert!(v.memory_bytes < MEMORY_CAP_BYTES);
    }
}

#[test]
fn validate_reports_zero_diagnostics() {
    let o = entroprod(&["validate", "couette"]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stdout(&o));
    assert!(stdout(&o).contains("couette: 0 diagnostic(s)"));
}

#[test]
fn misspelled_key_gets_a_suggestion() {
    let o = entroprod(&["validate", "cart", "--set", "wheelradius=2"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stdout(&o).contains("did you mean `wheel_radius`"), "{}", stdout(&o));
}

#[test]
fn misspelled_experiment_gets_a_suggestion() {
    let o = entroprod(&["brownain"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("did you mean `brownian`"), "{}", stderr(&o));
}

#[test]
fn unstable_step_is_predicted() {
    let o = entroprod(&["validate", "compressible", "--set", "dt=1.0"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stdout(&o).contains("predicted instability"), "{}", stdout(&o));
}

#[test]
fn oversized_grid_is_predicted_without_allocating() {
    let o = entroprod(&["validate", "brownian", "--set", "cells=40000"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stdout(&o).contains("exceeds the 4 GiB cap"), "{}", stdout(&o));
}

#[test]
fn type_errors_and_bad_sets_are_config_errors() {
    for args in [
        &["conundrum", "--set", "k=fast"][..],
        &["conundrum", "--set", "k"],
        &["conundrum", "--set", "k=-1"],
        &["conundrum", "--config", "/nonexistent/entroprod.toml"],
        &["validate"],
        &["circle", "--bogus"],
    ] {
        assert_eq!(entroprod(args).status.code(), Some(EXIT_CONFIG), "{args:?}");
    }
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_entroprod")).arg("conundrum").env("ENTROPROD_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = entroprod(&["conundrum", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}{}", stdout(&o), stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "summary.json")).unwrap();
    assert_eq!(summary["experiment"], "conundrum");
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["pass"], true);
    assert!(summary["certificates"].as_array().is_some_and(|c| !c.is_empty()));
    let csv = read(&out, "series.csv");
    assert!(csv.lines().count() > 1);
    assert!(read(&out, "config.echo").contains("seed"));
}

#[test]
fn config_file_overrides_and_set_wins() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.toml");
    std::fs::write(&file, "[circle]\ncells = 128\nsamples = 12\n").unwrap();
    let text = std::fs::read_to_string(&file).unwrap();
    let (cfg, errors) = resolve(Experiment::Circle, Some(&text), &["samples=9".into()], Some(5));
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!((cfg.usize("cells"), cfg.usize("samples"), cfg.seed), (128, 9, 5));
    let o = entroprod(&["validate", "circle", "--config", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_PASS), "{}", stdout(&o));
}

#[test]
fn failing_certificate_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fail");
    let o = entroprod(&["circle", "--set", "kernel_tol=1e-300", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CERTIFICATE), "{}", stdout(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "summary.json")).unwrap();
    assert_eq!(summary["pass"], false);
    assert_eq!(summary["failed"].as_array().map(Vec::len), Some(1));
}
