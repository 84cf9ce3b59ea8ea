use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn misswrite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_misswrite")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const QUICK: &str = "\
synth.n_records = 60
[context]
epochs = 3
learning_rate = 0.5
d = 8
d_f = 4
d_enc = 8
[relation]
epochs = 3
learning_rate = 0.5
batch_size = 64
pretrain_epochs = 1
pretrain_batch_size = 32
[pairs]
n_random = 50
";

fn quick_config(dir: &Path) -> String {
    let path = dir.join("quick.conf");
    fs::write(&path, QUICK).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = misswrite(&["detect", "--models", "m", "--out", "f.jsonl"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--corpus"));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&misswrite(&["--help"])), 0);
    assert_eq!(code(&misswrite(&["--version"])), 0);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "context.speed = 9\n").unwrap();
    let out = misswrite(&["--config", p(&conf), "gen-synthetic", "--out", p(dir.path())]);
    assert_eq!(code(&out), 64);
    let out = misswrite(&["--set", "pipeline.emit_on=sometimes", "gen-synthetic", "--out", p(dir.path())]);
    assert_eq!(code(&out), 64);
}

#[test]
fn unreadable_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = misswrite(&["train-context", "--contexts", p(&dir.path().join("nope.jsonl")), "--out", p(dir.path())]);
    assert_eq!(code(&out), 65);
}

#[test]
fn flags_beat_config_file_per_key() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    fs::write(&conf, "seed = 1\nsynth.n_records = 7\nsynth.diseases_per_record = 3\n").unwrap();
    let a = dir.path().join("a");
    let out = misswrite(&["--config", p(&conf), "--set", "synth.n_records=5", "gen-synthetic", "--out", p(&a)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("5 records"));

    // --seed overrides the file's seed; the file's other keys still apply
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    misswrite(&["--config", p(&conf), "--seed", "2", "gen-synthetic", "--out", p(&b)]);
    misswrite(&["--seed", "2", "--set", "synth.n_records=7", "--set", "synth.diseases_per_record=3", "gen-synthetic", "--out", p(&c)]);
    let read = |d: &Path| fs::read(d.join("corpus.jsonl")).unwrap();
    assert_eq!(read(&b), read(&c));
    let d = dir.path().join("d");
    misswrite(&["--config", p(&conf), "gen-synthetic", "--out", p(&d)]);
    assert_ne!(read(&b), read(&d));
}

#[test]
fn training_twice_with_one_seed_gives_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let conf = quick_config(dir.path());
    let data = dir.path().join("data");
    assert_eq!(code(&misswrite(&["--config", &conf, "--seed", "7", "gen-synthetic", "--out", p(&data)])), 0);
    let contexts = data.join("contexts.jsonl");
    for m in ["m1", "m2"] {
        let out = misswrite(&["--config", &conf, "--seed", "7", "train-context", "--contexts", p(&contexts), "--out", p(&dir.path().join(m))]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = |m: &str| fs::read(dir.path().join(m).join("context.bin")).unwrap();
    assert_eq!(bytes("m1"), bytes("m2"));
}

#[test]
fn end_to_end_on_a_small_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let conf = quick_config(dir.path());
    let data = dir.path().join("data");
    let models = dir.path().join("models");
    let run = |args: &[&str]| {
        let mut full = vec!["--config", conf.as_str(), "--seed", "3"];
        full.extend_from_slice(args);
        let out = misswrite(&full);
        assert_eq!(code(&out), 0, "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    run(&["gen-synthetic", "--out", p(&data)]);
    for f in ["corpus.jsonl", "gold.jsonl", "contexts.jsonl", "relations.tsv"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let pairs = dir.path().join("pairs.tsv");
    assert!(run(&["gen-pairs", "--corpus", p(&data.join("corpus.jsonl")), "--out", p(&pairs)]).starts_with("gen-pairs:"));
    run(&["train-context", "--contexts", p(&data.join("contexts.jsonl")), "--out", p(&models)]);
    run(&["train-relation", "--pairs", p(&data.join("relations.tsv")), "--pretrain", p(&pairs), "--out", p(&models)]);

    let findings = dir.path().join("findings.jsonl");
    let line = run(&["--parallelism", "4", "detect", "--corpus", p(&data.join("corpus.jsonl")), "--models", p(&models), "--out", p(&findings)]);
    assert!(line.contains("60 records"), "{line}");
    let text = fs::read_to_string(&findings).unwrap();
    assert!(text.lines().last().unwrap().contains("\"summary\""));

    let line = run(&["evaluate", "--findings", p(&findings), "--gold", p(&data.join("gold.jsonl"))]);
    assert!(line.starts_with("evaluate: precision"), "{line}");

    let csv = dir.path().join("ablation.csv");
    run(&["ablate", "--corpus", p(&data.join("corpus.jsonl")), "--gold", p(&data.join("gold.jsonl")), "--models", p(&models), "--out", p(&csv)]);
    let table = fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.lines().nth(1).unwrap().starts_with("full,"));

    let cost = dir.path().join("cost.json");
    run(&["drg-impact", "--corpus", p(&data.join("corpus.jsonl")), "--findings", p(&findings), "--precision", "0.9", "--out", p(&cost)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cost).unwrap()).unwrap();
    assert_eq!(report["precision"], 0.9);
    assert!(report["rows"].as_array().is_some_and(|r| !r.is_empty()));
}

#[test]
fn a_bad_corpus_line_gives_partial_exit_and_full_output() {
    let dir = tempfile::tempdir().unwrap();
    let conf = quick_config(dir.path());
    let data = dir.path().join("data");
    let models = dir.path().join("models");
    let base = ["--config", conf.as_str(), "--seed", "5"];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        misswrite(&v)
    };
    assert_eq!(code(&with(&["gen-synthetic", "--out", p(&data)])), 0);
    assert_eq!(code(&with(&["train-context", "--contexts", p(&data.join("contexts.jsonl")), "--out", p(&models)])), 0);
    assert_eq!(code(&with(&["train-relation", "--pairs", p(&data.join("relations.tsv")), "--out", p(&models)])), 0);

    let corpus = fs::read_to_string(data.join("corpus.jsonl")).unwrap();
    let mut lines: Vec<&str> = corpus.lines().collect();
    lines.insert(2, "{not json");
    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, lines.join("\n") + "\n").unwrap();

    let findings = dir.path().join("f.jsonl");
    let out = with(&["detect", "--corpus", p(&broken), "--models", p(&models), "--out", p(&findings)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let written = fs::read_to_string(&findings).unwrap();
    assert_eq!(written.lines().count(), 61);
}

#[test]
fn detect_without_models_needs_ablation_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&misswrite(&["--set", "synth.n_records=5", "gen-synthetic", "--out", p(&data)])), 0);
    let empty = dir.path().join("none");
    let corpus = data.join("corpus.jsonl");
    let out = misswrite(&["detect", "--corpus", p(&corpus), "--models", p(&empty), "--out", p(&dir.path().join("f"))]);
    assert_eq!(code(&out), 65);
    let out = misswrite(&[
        "--set",
        "pipeline.use_context=false",
        "--set",
        "pipeline.use_relation=false",
        "detect",
        "--corpus",
        p(&corpus),
        "--models",
        p(&empty),
        "--out",
        p(&dir.path().join("f")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
