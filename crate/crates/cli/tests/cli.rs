//! End-to-end checks of the `gridsafe` binary: exit codes, fixture output,
//! and run reproduction from the echoed configuration.

use std::path::Path;
use std::process::{Command, Output};

fn gridsafe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridsafe"))
}

fn run(args: &[&str]) -> Output {
    gridsafe().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn pf_check_on_bundled_case_converges() {
    let out = run(&["pf-check"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("converged"), "unexpected output: {text}");
}

#[test]
fn pf_check_out_of_range_row_is_a_user_error() {
    let out = run(&["pf-check", "--row", "99999"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_flag_exits_one() {
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_input_file_exits_three() {
    let out = run(&["pf-check", "--case", "/no/such.case", "--chronics", "/no/such.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_fixtures_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-fixtures", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["five_bus.case", "five_bus_mild.csv", "five_bus_stressed.csv"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    // the generated pair feeds straight back into pf-check
    let case = dir.path().join("five_bus.case");
    let chron = dir.path().join("five_bus_mild.csv");
    let out = run(&[
        "pf-check",
        "--case",
        case.to_str().unwrap(),
        "--chronics",
        chron.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_config_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = true\n").unwrap();
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn train_rerun_from_echoed_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");

    let out = run(&[
        "train",
        "--output-dir",
        run1.to_str().unwrap(),
        "--total-steps",
        "120",
        "--seed",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(run1.join("config.resolved.toml").is_file());
    assert!(run1.join("checkpoint.json").is_file());
    assert!(run1.join("metrics.csv").is_file());

    let out = run(&[
        "train",
        "--config",
        run1.join("config.resolved.toml").to_str().unwrap(),
        "--output-dir",
        run2.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(
        read(&run1.join("checkpoint.json")),
        read(&run2.join("checkpoint.json")),
        "checkpoints differ between identical runs"
    );
    assert_eq!(
        read(&run1.join("metrics.csv")),
        read(&run2.join("metrics.csv")),
        "metric reports differ between identical runs"
    );
}

#[test]
fn eval_reads_back_a_training_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "train",
        "--output-dir",
        train_dir.to_str().unwrap(),
        "--total-steps",
        "80",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let ckpt = train_dir.join("checkpoint.json");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--output-dir",
        eval_dir.to_str().unwrap(),
        "--episodes",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("eval over 4 episodes"), "unexpected output: {text}");
    assert!(eval_dir.join("eval.csv").is_file());
}

#[test]
fn refine_demo_prints_prompt_and_verdicts() {
    let out = run(&["refine-demo", "--count", "1", "--advisor", "rule"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("candidate 0"), "unexpected output: {text}");
    assert!(text.contains("proposed LINE changes:"), "prompt missing marker: {text}");
}
