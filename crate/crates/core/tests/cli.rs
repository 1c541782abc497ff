use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_topicmodel");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_corpus(dir: &Path) {
    let topics = [
        "vaccine dose pfizer booster clinic injection",
        "mask fabric filter cotton mouth nose",
        "tower radiation signal antenna network waves",
    ];
    let mut csv = String::from("id,text,country,language,label\n");
    for i in 0..45 {
        let words: Vec<&str> = topics[i % 3].split(' ').collect();
        let text: Vec<&str> = (0..10).map(|j| words[(i * 7 + j * 5) % words.len()]).collect();
        csv += &format!("a{i},The {} 😷 Covid 19,Germany,de,fake\n", text.join(" "));
    }
    csv += "x1,nur ein Satz,India,en,real\n";
    fs::write(dir.join("articles.csv"), csv).unwrap();
}

const CONFIG: &str = r#"
seed = 3
out_dir = "run"

[input]
corpus = "articles.csv"
[input.fields]
id = "id"

[split]
country = "Germany"
language = "de"
label = "fake"

[embedding.provider]
command = "builtin:hashing:32"
model_name = "mock"

[sweep]
n_neighbors = [8]
min_dist = [0.0]
n_components = [2]
min_samples = [4]
min_cluster_size = [8]
n_epochs = 150
"#;

#[test]
fn run_subcommand_writes_a_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();

    let out = run(dir.path(), &["--config", "run.toml", "run"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(dir.path().join("run/manifest.json")).unwrap();
    assert!(manifest.contains("\"n_documents\": 45"), "{manifest}");
    let corpus = fs::read_to_string(dir.path().join("run/corpus.jsonl")).unwrap();
    assert!(corpus.contains("covid19") && !corpus.contains('😷'));

    let report = run(dir.path(), &["--config", "run.toml", "report"]);
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stdout).contains("[top]"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let no_provider = CONFIG.replace("[embedding.provider]\ncommand = \"builtin:hashing:32\"\nmodel_name = \"mock\"\n", "");
    fs::write(dir.path().join("bad.toml"), no_provider).unwrap();
    let out = run(dir.path(), &["--config", "bad.toml", "run"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    fs::write(dir.path().join("typo.toml"), "sed = 1\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "typo.toml", "run"])), 2);
    assert_eq!(code(&run(dir.path(), &["run"])), 2);
}

#[test]
fn stage_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    fs::write(dir.path().join("run.toml"), CONFIG.replace("Germany", "Atlantis")).unwrap();
    let out = run(dir.path(), &["--config", "run.toml", "run"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest failed"));
}

#[test]
fn stage_by_stage_with_external_provider() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = run(d, args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).to_string()
    };

    ok(&["--out-dir", "o", "ingest", "--input", "articles.csv", "--id-col", "id", "--country", "Germany", "--language", "de", "--label", "fake"]);
    ok(&["--out-dir", "o", "preprocess", "--corpus", "o/corpus.raw.jsonl"]);
    let provider = format!("{BIN} mock-provider --dim 24");
    ok(&["--out-dir", "o", "embed", "--corpus", "o/corpus.jsonl", "--provider-cmd", &provider, "--model", "mock"]);
    assert_eq!(fs::read_to_string(d.join("o/embeddings.ids.txt")).unwrap().lines().count(), 45);

    let sweep = |out: &str, nn: &str| {
        ok(&[
            "--out-dir", "o", "--seed", "9", "sweep", "--embeddings", "o/embeddings.emb", "--n-neighbors", nn, "--min-dist", "0",
            "--n-components", "2", "--min-samples", "4", "--min-cluster-size", "8,10", "--n-epochs", "120", "--out", out,
        ])
    };
    sweep("o/a.jsonl", "6");
    sweep("o/b.jsonl", "10");
    ok(&["--out-dir", "o", "merge", "o/b.jsonl", "o/a.jsonl"]);
    let merged = fs::read_to_string(d.join("o/records.jsonl")).unwrap();
    assert_eq!(merged.lines().count(), 4);

    let selected = ok(&["select", "--records", "o/records.jsonl", "--rule", "top"]);
    assert!(selected.contains("\"top\""));
    ok(&["--out-dir", "o", "cluster", "--embeddings", "o/embeddings.emb", "--records", "o/records.jsonl"]);
    ok(&["--out-dir", "o", "topics", "--corpus", "o/corpus.jsonl", "--labels", "o/labels.csv", "--top", "5"]);
    let means = ok(&["--out-dir", "o", "coherence", "--corpus", "o/corpus.jsonl", "--topics", "o/topics.json", "--metrics", "u_mass,c_npmi", "--top", "5"]);
    assert!(means.contains("u_mass") && !means.contains("c_v"), "{means}");

    ok(&["--out-dir", "o", "project", "--embeddings", "o/embeddings.emb", "--labels", "o/labels.csv", "--nation", "Germany", "--n-neighbors", "6"]);
    let csv = fs::read_to_string(d.join("o/projection.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("id,nation,cluster,x,y"));
    assert_eq!(csv.lines().count(), 46);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("Germany")));

    let missing = run(d, &["ctc", "--topics", "o/topics.json", "--replay", "o/none.jsonl"]);
    assert_eq!(code(&missing), 1);
}
