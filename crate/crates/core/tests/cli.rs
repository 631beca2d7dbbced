mod common;

use std::path::Path;
use std::process::Command;

use common::data_dir;

fn limecep(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_limecep"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_truth_run_score_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    std::fs::write(
        t.join("spec.json"),
        r#"{"n_events": 120, "seed": 9, "ooo_probability": 0.4, "max_displacement_ms": 5000,
            "duplicate_count": 5,
            "type_alphabet": [{"name": "A", "mean_gap_seconds": 2},
                              {"name": "B", "mean_gap_seconds": 2},
                              {"name": "C", "mean_gap_seconds": 2}]}"#,
    )
    .unwrap();
    let patterns = data_dir().join("patterns/abc");
    limecep(&[
        "gen",
        "--spec",
        s(&t.join("spec.json")),
        "--out",
        s(&t.join("ev.jsonl")),
        "--base-out",
        s(&t.join("base.jsonl")),
    ]);
    assert_eq!(
        std::fs::read_to_string(t.join("ev.jsonl"))
            .unwrap()
            .lines()
            .count(),
        125
    );

    limecep(&[
        "truth",
        "--patterns",
        s(&patterns),
        "--events",
        s(&t.join("base.jsonl")),
        "--out",
        s(&t.join("truth.jsonl")),
    ]);
    limecep(&[
        "run",
        "--patterns",
        s(&patterns),
        "--events",
        s(&t.join("ev.jsonl")),
        "--policy",
        "stnm",
        "--correction",
        "on",
        "--theta-mult",
        "1e9",
        "--weights",
        "1,1,1",
        "--slack-threshold",
        "0.1",
        "--report",
        s(&t.join("report.json")),
        "--emissions",
        s(&t.join("em.jsonl")),
        "--truth",
        s(&t.join("truth.jsonl")),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["score"]["precision"], 1.0);
    assert_eq!(report["score"]["recall"], 1.0);
    assert_eq!(report["summary"]["counters"]["duplicates"], 5);

    let scored: serde_json::Value = serde_json::from_str(&limecep(&[
        "score",
        "--emissions",
        s(&t.join("em.jsonl")),
        "--truth",
        s(&t.join("truth.jsonl")),
    ]))
    .unwrap();
    assert_eq!(scored["recall"], 1.0);
    assert_eq!(scored["fn"], 0);
}

#[test]
fn experiment_mode_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = limecep(&[
        "run",
        "--experiment",
        s(&data_dir().join("s43/experiment.json")),
        "--out-dir",
        s(tmp.path()),
    ]);
    assert!(out.contains("precision 1.0000"));
    for f in [
        "s43-example.report.json",
        "s43-example.csv",
        "s43-example.emissions.jsonl",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_limecep"))
        .args([
            "run",
            "--patterns",
            "/nonexistent",
            "--events",
            "/nonexistent",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("limecep: "));
    let out = Command::new(env!("CARGO_BIN_EXE_limecep"))
        .args([
            "run",
            "--patterns",
            "x",
            "--events",
            "y",
            "--weights",
            "1,2",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
