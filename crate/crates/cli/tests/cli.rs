//! The binary end to end: exit codes, stdout/stderr shapes, and the
//! files each command leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pafr_cli::emit::emit_canonical;
use pafr_core::corpus;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pafr"))
        .args(args)
        .output()
        .expect("the pafr binary runs")
}

fn cli_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pafr"))
        .args(args)
        .env(key, value)
        .output()
        .expect("the pafr binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

/// A scratch directory unique to this test process.
fn scratch(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pafr-cli-{label}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch directory");
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap_or_else(|e| panic!("writing {}: {e}", path.display()));
}

#[test]
fn check_reports_consistency_on_stdout() {
    let out = cli(&["check", fixture_path("db_initial.arch").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("consistent"));
}

#[test]
fn simulate_runs_silent_ticks_without_an_input_file() {
    let out = cli(&[
        "simulate",
        fixture_path("minimal.arch").to_str().unwrap(),
        "--ticks",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("JSON output");
    assert_eq!(
        doc,
        serde_json::json!({
            "traces": [{ "ticks": 3, "channels": { "B": [[], [], []] } }],
        })
    );
}

#[test]
fn simulate_replays_an_input_trace() {
    let dir = scratch("simulate");
    let input = dir.join("input.json");
    write(&input, r#"{ "ticks": 2, "channels": { "A": [[1], []] } }"#);
    let out = cli(&[
        "simulate",
        fixture_path("minimal.arch").to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("JSON output");
    // The echo repeats its input one tick later.
    assert_eq!(
        doc,
        serde_json::json!({
            "traces": [{ "ticks": 2, "channels": { "B": [[], [1]] } }],
        })
    );
}

#[test]
fn simulate_without_input_or_ticks_exits_two() {
    let out = cli(&["simulate", fixture_path("minimal.arch").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--ticks"));
}

#[test]
fn refine_in_assumed_mode_exits_two_and_still_writes_the_result() {
    let dir = scratch("refine-assumed");
    let out_path = dir.join("refined.arch");
    let out = cli(&[
        "refine",
        fixture_path("db_initial.arch").to_str().unwrap(),
        fixture_path("delta_refactor.script").to_str().unwrap(),
        "--mode",
        "syntactic",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stdout:\n{}", stdout_of(&out));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("refinement holds under assumptions"));
    assert!(stdout.contains("assumed"));
    // The written result is the fully refactored system.
    let text = std::fs::read_to_string(&out_path).expect("the refined file exists");
    let arch = pafr_cli::parser::parse_architecture("refined.arch", &text).expect("it parses");
    assert_eq!(arch.system, corpus::db_final());
}

#[test]
fn refine_rejects_a_failing_script() {
    let dir = scratch("refine-reject");
    // Renaming a channel to a name already in use violates the rule's
    // freshness premise.
    let script = dir.join("bad.script");
    write(&script, "rename-channel I Key\n");
    let out = cli(&[
        "refine",
        fixture_path("db_initial.arch").to_str().unwrap(),
        script.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stdout:\n{}", stdout_of(&out));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("failed"));
    assert!(stdout.contains("refinement rejected at step 1 of 1"));
}

#[test]
fn verify_refinement_holds_between_the_shipped_and_refactored_store() {
    let dir = scratch("verify-holds");
    let refactored = dir.join("db_final.arch");
    write(&refactored, &emit_canonical(&corpus::db_final()));
    let out = cli(&[
        "verify-refinement",
        fixture_path("db_initial.arch").to_str().unwrap(),
        refactored.to_str().unwrap(),
        "--depth",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "stdout:\n{}", stdout_of(&out));
    assert!(stdout_of(&out).contains("refinement holds up to 4 ticks"));
}

#[test]
fn verify_refinement_writes_a_witness_when_it_fails() {
    let dir = scratch("verify-fails");
    let skewed = dir.join("db_skewed.arch");
    write(
        &skewed,
        &emit_canonical(&corpus::db_final_with_decoder(corpus::dec_machine_skewed())),
    );
    // The corruption only surfaces once a stored entry has crossed the
    // whole encode/decode pipeline and been queried: five ticks.
    let witness = dir.join("witness.json");
    let out = cli(&[
        "verify-refinement",
        fixture_path("db_initial.arch").to_str().unwrap(),
        skewed.to_str().unwrap(),
        "--depth",
        "5",
        "--witness",
        witness.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stdout:\n{}", stdout_of(&out));
    assert!(stdout_of(&out).contains("refinement fails"));
    let text = std::fs::read_to_string(&witness).expect("the witness file exists");
    let doc: serde_json::Value = serde_json::from_str(&text).expect("the witness is JSON");
    assert!(doc.get("note").is_some());
    assert!(doc.get("ticks").is_some());
    assert!(doc.get("channels").is_some());

    // The witness file is itself a trace: replaying it on the corrupted
    // system reproduces the offending output.
    let out = cli(&[
        "simulate",
        skewed.to_str().unwrap(),
        "--input",
        witness.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));
    let replay: serde_json::Value =
        serde_json::from_str(&stdout_of(&out)).expect("simulate prints JSON");
    let traces = replay["traces"].as_array().expect("a trace list");
    assert!(
        traces.contains(&doc["output"]),
        "the corrupted system should reproduce the witness output"
    );
}

#[test]
fn a_tiny_exploration_ceiling_makes_the_check_inconclusive() {
    let dir = scratch("verify-ceiling");
    let refactored = dir.join("db_final.arch");
    write(&refactored, &emit_canonical(&corpus::db_final()));
    let out = cli_with_env(
        &[
            "verify-refinement",
            fixture_path("db_initial.arch").to_str().unwrap(),
            refactored.to_str().unwrap(),
            "--depth",
            "4",
        ],
        "PAFR_BUDGET_CEILING",
        "1",
    );
    assert_eq!(out.status.code(), Some(3), "stdout:\n{}", stdout_of(&out));
    assert!(stdout_of(&out).contains("inconclusive"));
}

#[test]
fn sampling_flags_require_sampled_mode() {
    let out = cli(&[
        "verify-refinement",
        fixture_path("db_initial.arch").to_str().unwrap(),
        fixture_path("db_initial.arch").to_str().unwrap(),
        "--samples",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--sampled"));
}

#[test]
fn exported_json_loads_back_through_every_command() {
    let dir = scratch("export-json");
    let json_path = dir.join("db.json");
    let out = cli(&[
        "export-json",
        fixture_path("db_initial.arch").to_str().unwrap(),
        "--out",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));

    let out = cli(&["check", json_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("consistent"));

    let out = cli(&["simulate", json_path.to_str().unwrap(), "--ticks", "2"]);
    assert_eq!(out.status.code(), Some(0), "stderr:\n{}", stderr_of(&out));
}

#[test]
fn export_dot_prints_a_digraph() {
    let out = cli(&["export-dot", fixture_path("db_initial.arch").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dot = stdout_of(&out);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("\"PRE\" -> \"RDB\" [label=\"I\"]"));
    pafr_cli::dot::validate_dot(&dot).expect("well-formed DOT");
}

#[test]
fn missing_files_and_parse_errors_exit_two() {
    let out = cli(&["check", "no_such_file.arch"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = scratch("parse-error");
    let bad = dir.join("bad.arch");
    write(&bad, "machine M { echo A -> }\n");
    let out = cli(&["check", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("bad.arch"), "stderr:\n{}", stderr_of(&out));
}

#[test]
fn an_invalid_ceiling_is_rejected() {
    let out = cli_with_env(
        &["check", fixture_path("db_initial.arch").to_str().unwrap()],
        "PAFR_BUDGET_CEILING",
        "not-a-number",
    );
    // `check` never explores, so the bad value must not break it...
    assert_eq!(out.status.code(), Some(0));

    // ...but commands that do explore refuse to run with it.
    let out = cli_with_env(
        &[
            "verify-refinement",
            fixture_path("db_initial.arch").to_str().unwrap(),
            fixture_path("db_initial.arch").to_str().unwrap(),
        ],
        "PAFR_BUDGET_CEILING",
        "not-a-number",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("PAFR_BUDGET_CEILING"));
}
