use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lingreader::synthetic::toy_coqa_json;

fn lingreader(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lingreader"))
        .args(args)
        .current_dir(dir)
        .env("LINGREADER_MODEL_CACHE", dir.join("no-cache"))
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lingreader(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "diagnostic is one line: {text}");
    text
}

fn workspace(stories: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let json = serde_json::to_string(&toy_coqa_json(stories, 11)).unwrap();
    fs::write(dir.path().join("toy.json"), json).unwrap();
    ok(dir.path(), &["ingest", "--input", "toy.json", "--split", "train", "--output", "corpus.jsonl"]);
    dir
}

#[test]
fn offline_tagging_leaves_surprisal_undefined() {
    let dir = workspace(3);
    ok(dir.path(), &["--offline", "tag-classes", "--corpus", "corpus.jsonl", "--output", "classes.jsonl"]);
    let raw = fs::read_to_string(dir.path().join("classes.jsonl")).unwrap();
    assert!(!raw.is_empty());
    for line in raw.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["defined"]["SURP"], false);
        assert_eq!(v["classes"]["SURP"], false);
        assert_eq!(v["defined"]["NEG"], true);
    }
    assert!(dir.path().join("classes.jsonl.run.json").exists());
}

#[test]
fn online_tagging_without_a_masked_lm_fails_with_one_line() {
    let dir = workspace(1);
    let out = lingreader(dir.path(), &["tag-classes", "--corpus", "corpus.jsonl", "--output", "classes.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("--offline"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = workspace(1);
    let cases: [&[&str]; 4] = [
        &["train", "--corpus", "corpus.jsonl", "--output", "model"],
        &["--backend", "parser=x", "--offline", "annotate", "--corpus", "corpus.jsonl", "--output", "a.jsonl"],
        &["--offline", "train", "--corpus", "corpus.jsonl", "--output", "m", "--answer-classes", "7"],
        &["--offline", "annotate", "--corpus", "corpus.jsonl", "--output", "corpus.jsonl"],
    ];
    for args in cases {
        let out = lingreader(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        stderr_line(&out);
    }
    fs::write(dir.path().join("bad.json"), r#"{"learning_rate": 1}"#).unwrap();
    let out = lingreader(dir.path(), &["--config", "bad.json", "report", "--report", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_predictions_exit_with_one() {
    let dir = workspace(2);
    fs::write(dir.path().join("p.json"), r#"[{"id": "toy0000", "turn_id": 1, "answer": "x"}]"#).unwrap();
    let out = lingreader(dir.path(), &["evaluate", "--pred", "p.json", "--corpus", "corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("missing predictions"));
}

fn pipeline(dir: &Path) {
    ok(dir, &["--offline", "tag-classes", "--corpus", "corpus.jsonl", "--output", "classes.jsonl"]);
    ok(
        dir,
        &[
            "--offline", "--seed", "3", "train", "--corpus", "corpus.jsonl", "--output", "model", "--epochs", "2",
            "--aux-task", "srl", "--learning-rate", "1e-3",
        ],
    );
    ok(dir, &["predict", "--model", "model", "--corpus", "corpus.jsonl", "--output", "pred.json"]);
    let table = ok(
        dir,
        &[
            "evaluate", "--pred", "pred.json", "--corpus", "corpus.jsonl", "--classes", "classes.jsonl", "--output",
            "report.json",
        ],
    );
    assert!(table.starts_with("model"));
    assert!(table.contains("overall") && table.contains("surp"));
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let a = workspace(4);
    let b = workspace(4);
    pipeline(a.path());
    pipeline(b.path());
    for file in [
        "corpus.jsonl",
        "classes.jsonl",
        "model/weights.bin",
        "model/meta.json",
        "model/vocab.txt",
        "pred.json",
        "pred.details.jsonl",
        "report.json",
        "pred.json.run.json",
    ] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("model/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "train");
    assert_eq!(run["settings"]["seed"], 3);
    assert_eq!(run["args"]["aux_task"], "SRL");
}

#[test]
fn inputs_are_not_modified() {
    let dir = workspace(2);
    let before = fs::read(dir.path().join("corpus.jsonl")).unwrap();
    pipeline(dir.path());
    assert_eq!(fs::read(dir.path().join("corpus.jsonl")).unwrap(), before);
}

#[test]
fn ensemble_and_report_compare() {
    let dir = workspace(3);
    pipeline(dir.path());
    let p = dir.path();
    fs::copy(p.join("pred.details.jsonl"), p.join("other.jsonl")).unwrap();
    let counts = ok(
        p,
        &["ensemble", "--model", "base=pred.details.jsonl", "--model", "other.jsonl", "--output", "ens.json"],
    );
    assert!(counts.contains("base") && counts.contains("other"));
    assert_eq!(fs::read(p.join("ens.json")).unwrap(), fs::read(p.join("pred.json")).unwrap());
    let winners = fs::read_to_string(p.join("ens.winners.jsonl")).unwrap();
    for line in winners.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["model_id"], "base");
        assert_eq!(v["tied_with"][0], "other");
    }

    let table = ok(p, &["report", "--compare", "report.json", "report.json", "--svg", "heat.svg"]);
    let delta = table.lines().find(|l| l.starts_with("delta")).expect("delta row");
    assert!(delta.contains("+0.0"));
    assert!(fs::read_to_string(p.join("heat.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn augment_with_a_table_masked_lm() {
    let dir = workspace(3);
    let p = dir.path();
    fs::write(p.join("lm.json"), r#"{"default": [["Zorblat", 0.9], ["the", 0.1]]}"#).unwrap();
    ok(p, &["--backend", "masked-lm=table:lm.json", "augment", "--corpus", "corpus.jsonl", "--output", "aug.jsonl"]);
    let original = fs::read_to_string(p.join("corpus.jsonl")).unwrap();
    let augmented = fs::read_to_string(p.join("aug.jsonl")).unwrap();
    assert!(augmented.starts_with(&original));
    let manifest = fs::read_to_string(p.join("aug.manifest.jsonl")).unwrap();
    let added: u64 = manifest
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["samples_added"].as_u64().unwrap())
        .sum();
    assert_eq!(augmented.lines().count() as u64, original.lines().count() as u64 + added);

    let out = lingreader(p, &["--offline", "augment", "--corpus", "corpus.jsonl", "--output", "none.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    stderr_line(&out);
}
