use std::path::Path;
use std::process::Command;

use nerforge::corpus::{parse_flat_conll, parse_nested, write_flat_corpus, write_nested, ColumnOrder, Document};
use nerforge::eval::{score_flat, score_nested, EvalRecord};
use nerforge::model::ModelBundle;
use nerforge::synthetic::{FlatGenerator, NestedGenerator};

fn nerforge() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nerforge"));
    cmd.env("RUST_LOG", "warn");
    for var in ["NERFORGE_CONFIG", "NERFORGE_MODEL", "NERFORGE_SEED", "NERFORGE_TAGSET", "NERFORGE_OUT"] {
        cmd.env_remove(var);
    }
    cmd
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_flat(path: &Path, docs: &[Document]) {
    std::fs::write(path, write_flat_corpus(docs, ColumnOrder::TokenLabel).unwrap()).unwrap();
}

fn jsonl(path: &Path) -> Vec<EvalRecord> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn eval_of_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("g.conll");
    write_flat(&gold, &FlatGenerator::new(&["PER", "LOC"], 0).generate(30, 1, "g"));
    let report = dir.path().join("r.jsonl");
    let table = run_ok(nerforge().args(["eval", "--gold"]).arg(&gold).arg("--pred").arg(&gold).arg("--jsonl").arg(&report));
    assert!(table.lines().nth(1).unwrap().trim_end().ends_with("1.0000"), "{table}");
    let records = jsonl(&report);
    assert_eq!(records[0].etype, "ALL");
    assert!(records.iter().all(|r| r.f1 == 1.0 && r.fp == 0 && r.fn_ == 0));
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = nerforge().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    let out = nerforge().args(["predict", "--bogus-flag"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = nerforge().output().unwrap();
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "John runs.").unwrap();
    let out = nerforge()
        .args(["predict", "--model"])
        .arg(dir.path().join("missing.nf"))
        .arg(&input)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

const FLAT_CONFIG: &str = r#"
name = "cli-flat"
kind = "flat"
languages = ["xx"]

[model.encoder]
dim = 24
buckets = 1024

[train]
epochs = 4
batch_size = 8
peak_learning_rate = 0.01

[[corpus]]
id = "syn"
tagset = "conll"
train = "train.conll"
dev = "dev.conll"
"#;

#[test]
fn flat_train_predict_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let generator = FlatGenerator::new(&["PER", "ORG", "LOC", "MISC"], 0);
    write_flat(&d.join("train.conll"), &generator.generate(200, 1, "t"));
    let dev_docs = generator.generate(60, 2, "d");
    write_flat(&d.join("dev.conll"), &dev_docs);
    std::fs::write(d.join("train.toml"), FLAT_CONFIG).unwrap();

    let model_path = d.join("model.nf");
    run_ok(
        nerforge()
            .arg("train")
            .arg("--config")
            .arg(d.join("train.toml"))
            .arg("--out")
            .arg(&model_path)
            .arg("--history")
            .arg(d.join("history.jsonl"))
            .args(["--seed", "7"]),
    );
    let history = std::fs::read_to_string(d.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 4);

    let pred = d.join("pred.conll");
    run_ok(
        nerforge()
            .env("NERFORGE_MODEL", &model_path)
            .env("NERFORGE_TAGSET", "conll")
            .arg("predict")
            .arg(d.join("dev.conll"))
            .args(["--input", "conll", "--output", "conll", "--out"])
            .arg(&pred),
    );
    let report = d.join("report.jsonl");
    run_ok(nerforge().args(["eval", "--corpus", "syn", "--gold"]).arg(d.join("dev.conll")).arg("--pred").arg(&pred).arg("--jsonl").arg(&report));

    let model = ModelBundle::load(&model_path).unwrap();
    assert_eq!(model.train_config.as_ref().unwrap().seed, 7);
    let gold_docs = parse_flat_conll(&std::fs::read_to_string(d.join("dev.conll")).unwrap(), 0, 1).unwrap();
    let sentences: Vec<_> = gold_docs.iter().flat_map(|d| &d.sentences).collect();
    let gold: Vec<_> = sentences.iter().map(|s| s.flat_spans.clone()).collect();
    let predicted: Vec<_> = sentences.iter().map(|s| model.predict_flat(&s.words(), "conll").unwrap()).collect();
    let expected = score_flat(&gold, &predicted).unwrap().records("syn");
    assert_eq!(jsonl(&report), expected);
}

#[test]
fn nested_train_predict_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let generator = NestedGenerator::default();
    let write = |name: &str, docs: &[Document]| {
        let text: String = docs.iter().map(|doc| write_nested(doc).unwrap()).collect();
        std::fs::write(d.join(name), text).unwrap();
    };
    write("train.txt", &generator.generate(100, 1, "t"));
    write("dev.txt", &generator.generate(30, 2, "d"));
    std::fs::write(
        d.join("nested.toml"),
        r#"
name = "cli-nested"
kind = "nested"
etypes = ["LOC", "ORG", "PER"]

[model.encoder]
dim = 16
buckets = 512

[train]
frozen_epochs = 1
epochs = 2
frozen_learning_rate = 0.01
peak_learning_rate = 0.01

[[corpus]]
id = "nest"
format = "nested"
train = "train.txt"
dev = "dev.txt"
"#,
    )
    .unwrap();
    let model_path = d.join("nested.nf");
    run_ok(nerforge().arg("train").arg("--config").arg(d.join("nested.toml")).arg("--out").arg(&model_path));

    let pred = d.join("pred.txt");
    run_ok(
        nerforge()
            .arg("predict")
            .arg("--model")
            .arg(&model_path)
            .arg(d.join("dev.txt"))
            .args(["--input", "conll", "--output", "conll", "--out"])
            .arg(&pred),
    );
    let report = d.join("report.jsonl");
    run_ok(nerforge().args(["eval", "--nested", "--gold"]).arg(d.join("dev.txt")).arg("--pred").arg(&pred).arg("--jsonl").arg(&report));

    let model = ModelBundle::load(&model_path).unwrap();
    let gold_docs = parse_nested(&std::fs::read_to_string(d.join("dev.txt")).unwrap()).unwrap();
    let sentences: Vec<_> = gold_docs.iter().flat_map(|d| &d.sentences).collect();
    let gold: Vec<_> = sentences.iter().map(|s| s.nested_spans.clone()).collect();
    let predicted: Vec<_> = sentences.iter().map(|s| model.predict_nested(&s.words()).unwrap()).collect();
    assert_eq!(jsonl(&report), score_nested(&gold, &predicted).unwrap().records("eval"));
}

#[test]
fn plain_text_prediction_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelBundle::new_flat(
        "plain",
        nerforge::tagset::TagsetRegistry::default_registry(),
        nerforge::model::ModelConfig::default(),
    )
    .unwrap();
    let model_path = dir.path().join("m.nf");
    model.save(&model_path).unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "John Smith runs. Mary stays.").unwrap();
    let out = run_ok(
        nerforge()
            .arg("predict")
            .arg("--model")
            .arg(&model_path)
            .args(["--tagset", "onto", "--output", "json"])
            .arg(&input),
    );
    let response: nerforge_service::RecognizeResponse = serde_json::from_str(&out).unwrap();
    assert_eq!(response.sentences.len(), 2);
    assert_eq!(response.tagset, "onto");

    let out = nerforge()
        .arg("predict")
        .arg("--model")
        .arg(&model_path)
        .args(["--tagset", "nope"])
        .arg(&input)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
