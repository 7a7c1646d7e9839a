use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn koti(args: &[&str], data: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_koti"));
    cmd.args(args);
    if let Some(d) = data {
        cmd.arg("--data").arg(d);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn corpus(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("notes.jsonl");
    let o = Command::new(env!("CARGO_BIN_EXE_koti"))
        .args([
            "generate",
            "--task",
            "dys",
            "--counts",
            "6,6,6",
            "--note-tokens",
            "300",
            "--depth",
            "150",
            "--seed",
            "3",
        ])
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    stdout(&o);
    path
}

#[test]
fn generate_writes_labeled_jsonl() {
    let o = koti(
        &[
            "generate",
            "--task",
            "dys",
            "--counts",
            "2,3,4",
            "--note-tokens",
            "120",
            "--depth",
            "40",
        ],
        None,
    );
    let text = stdout(&o);
    let rows: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 9);
    let count = |label: &str| rows.iter().filter(|r| r["label"] == label).count();
    assert_eq!((count("Yes"), count("No"), count("Unknown")), (2, 3, 4));
}

#[test]
fn generate_needs_counts_for_binary_tasks() {
    let o = koti(&["generate", "--task", "pvd"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[InvalidSpec]"));
}

#[test]
fn build_shows_insertion_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let notes = std::fs::read_to_string(&data).unwrap();
    let first: Value = serde_json::from_str(notes.lines().next().unwrap()).unwrap();
    let id = first["id"].as_str().unwrap();

    let out = stdout(&koti(
        &[
            "build",
            "--task",
            "dys",
            "--method",
            "koti",
            "--max-input",
            "104",
            "--id",
            id,
        ],
        Some(&data),
    ));
    assert!(out.contains("method:      KOTI"), "{out}");
    assert!(out.contains(">>> dysmenorrhea [MASK] <<<"), "{out}");
    assert!(out.contains("budget 100"), "{out}");
    let fallback = first["label"] == "Unknown";
    assert_eq!(out.contains("FALLBACK"), fallback, "{out}");

    let out = stdout(&koti(
        &["build", "--task", "dys", "--method", "sti-s", "--id", id],
        Some(&data),
    ));
    assert!(out.contains("method:      STI-S") && !out.contains("FALLBACK"));
    assert!(out.trim_end().ends_with("<<<"), "{out}");
}

#[test]
fn build_unknown_note() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let o = koti(&["build", "--task", "dys", "--id", "nope"], Some(&data));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[UnknownNoteId]"));
}

#[test]
fn eval_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let out = stdout(&koti(
        &["eval", "--task", "dys", "--method", "sti-k", "--runs", "2"],
        Some(&data),
    ));
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["method"], "STI-K");
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert_eq!(report["summary"]["completed_runs"], 2);
    assert_eq!(report["config_fingerprint"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_fingerprint_tracks_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let fp = |extra: &[&str]| {
        let mut args = vec![
            "eval",
            "--task",
            "dys",
            "--plan",
            "balanced:1",
            "--runs",
            "2",
        ];
        args.extend_from_slice(extra);
        let v: Value = serde_json::from_str(&stdout(&koti(&args, Some(&data)))).unwrap();
        v["config_fingerprint"].as_str().unwrap().to_string()
    };
    let base = fp(&[]);
    assert_eq!(base, fp(&[]));
    assert_ne!(base, fp(&["--seed", "1"]));
    assert_ne!(base, fp(&["--lr", "1e-5"]));
    assert_ne!(base, fp(&["--max-input", "256"]));
}

#[test]
fn eval_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    for (args, name) in [
        (
            vec!["eval", "--task", "dys", "--plan", "balanced:x"],
            "InvalidConfig",
        ),
        (vec!["eval", "--task", "dys", "--lr", "1"], "InvalidConfig"),
        (
            vec!["eval", "--task", "dys", "--plan", "balanced:7"],
            "InsufficientClassExamples",
        ),
        (
            vec!["eval", "--task", "dys", "--plan", "random:19"],
            "SampleTooLarge",
        ),
        (vec!["eval", "--task", "nope"], "InvalidConfig"),
    ] {
        let o = koti(&args, Some(&data));
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(
            !o.status.success() && stderr.contains(&format!("error[{name}]")),
            "{args:?}: {stderr}"
        );
    }
}

#[test]
fn tune_marks_best_trial() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let json = dir.path().join("search.json");
    let out = stdout(
        &Command::new(env!("CARGO_BIN_EXE_koti"))
            .args([
                "tune",
                "--task",
                "dys",
                "--plan",
                "balanced:1",
                "--runs",
                "2",
                "--trials",
                "3",
                "--data",
            ])
            .arg(&data)
            .arg("--out")
            .arg(&json)
            .output()
            .unwrap(),
    );
    assert_eq!(out.lines().count(), 4, "{out}");
    assert_eq!(out.matches("<- best").count(), 1);
    let search: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(search["trials"].as_array().unwrap().len(), 3);
}

#[test]
fn stats_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let out = stdout(&koti(
        &["stats", "--task", "dys", "--limit", "128"],
        Some(&data),
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("share > 128"));
    let cols: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(cols[0], "18");
    // 300-token notes in 128-token chunks.
    assert_eq!(cols[4], "3.00");
    assert_eq!(cols[5], "0.667");
}

#[test]
fn csv_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("notes.csv");
    std::fs::write(&path, "id,text,label\na,Patient reports cramps.,Yes\nb,Denies cramps.,No\nc,Nothing here.,Unknown\n").unwrap();
    let out = stdout(&koti(
        &["eval", "--task", "dys", "--runs", "1"],
        Some(&path),
    ));
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["summary"]["mean"], 1.0);
}
