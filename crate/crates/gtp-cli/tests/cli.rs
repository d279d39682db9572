//! End-to-end runs of the `gtp` binary: the synth → train → eval → infer →
//! heatmap pipeline, deterministic logs, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn gtp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn pipeline_runs_end_to_end_with_deterministic_logs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = gtp(
        &[
            "synth", "--out", "data", "--count", "12", "--noise", "0.1", "--seed", "3",
            "--clips-min", "6", "--clips-max", "8", "--video-dim", "8", "--word-dim", "8",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("data/manifest.jsonl").exists());

    let train_args = [
        "train", "--manifest", "data/manifest.jsonl", "--out", "model.gtpc",
        "--hidden", "8", "--epochs", "3", "--seed", "5",
    ];
    let first = gtp(&train_args, d);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(d.join("model.gtpc").exists());
    let second = gtp(&train_args, d);
    assert_eq!(stdout(&first), stdout(&second), "training log is not deterministic");
    assert!(stdout(&first).contains("epoch 0002 loss"));

    let eval = gtp(&["eval", "--manifest", "data/manifest.jsonl", "--checkpoint", "model.gtpc"], d);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let eval_text = stdout(&eval);
    for key in ["precision ", "recall ", "f1 ", "iou "] {
        assert!(eval_text.contains(key), "missing {key} in {eval_text}");
    }

    let infer = gtp(
        &[
            "infer", "--checkpoint", "model.gtpc",
            "--clips", "data/synth-000000.clips.gtpf",
            "--words", "data/synth-000000.words.gtpf",
        ],
        d,
    );
    assert!(infer.status.success());
    let indices: Vec<usize> =
        stdout(&infer).split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert!(!indices.is_empty() && indices.len() <= 5);
    for w in indices.windows(2) {
        assert!(w[1] > w[0]);
    }

    let heat = gtp(
        &[
            "heatmap", "--checkpoint", "model.gtpc",
            "--clips", "data/synth-000000.clips.gtpf",
            "--words", "data/synth-000000.words.gtpf",
            "--out", "maps",
        ],
        d,
    );
    assert!(heat.status.success(), "{}", String::from_utf8_lossy(&heat.stderr));
    for f in ["attention.tsv", "attention.pgm", "adjacency.tsv", "adjacency.pgm"] {
        assert!(d.join("maps").join(f).exists(), "missing {f}");
    }
}

#[test]
fn gradcheck_subcommand_passes_at_small_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = gtp(
        &["gradcheck", "--hidden", "6", "--video-dim", "6", "--word-dim", "6", "--clips", "5", "--words", "4"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("PASS"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // unknown flag: usage error
    let out = gtp(&["train", "--bogus"], d);
    assert_eq!(out.status.code(), Some(1));

    // unknown variant: usage error
    let out = gtp(
        &["train", "--manifest", "x.jsonl", "--out", "m", "--variant", "nope"],
        d,
    );
    assert_eq!(out.status.code(), Some(1));

    // malformed manifest: data error
    std::fs::write(d.join("bad.jsonl"), "{oops}\n").unwrap();
    let out = gtp(&["train", "--manifest", "bad.jsonl", "--out", "m", "--hidden", "4"], d);
    assert_eq!(out.status.code(), Some(2));

    // corrupt checkpoint: data error
    std::fs::write(d.join("bad.gtpc"), b"GTPC junk").unwrap();
    let out = gtp(&["eval", "--manifest", "bad.jsonl", "--checkpoint", "bad.gtpc"], d);
    assert_eq!(out.status.code(), Some(2));

    // help goes to stdout and succeeds
    let out = gtp(&["--help"], d);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("thumbnail"));
}
