use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn copattern(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_copattern"))
        .args(args)
        .current_dir(dir)
        .env_remove("COPATTERN_OUT")
        .env_remove("COPATTERN_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Small synthetic corpus written by `copattern synth` into `dir/data`.
fn synth_corpus(dir: &Path) -> PathBuf {
    write(
        dir,
        "synth.json",
        r#"{"n_authors": 80, "papers_first_year": 20, "papers_last_year": 40, "seed": 3}"#,
    );
    let o = copattern(&["synth", "--config", "synth.json", "--out", "data"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("data/corpus.jsonl")
}

/// A linearly separable-ish matrix in the persisted CSV layout.
fn feature_csv(dir: &Path, name: &str, features: &[&str], rows: usize) -> PathBuf {
    let mut text = format!("author_a,author_b,{},label\n", features.join(","));
    for i in 0..rows {
        let x0 = (i * 37 % 101) as f64 / 10.0;
        let x1 = (i * 53 % 89) as f64 / 20.0;
        let label = u8::from(x0 + 0.3 * x1 > 5.5 || i % 9 == 0);
        text.push_str(&format!("a{i},b{i},{x0},{x1},{label}\n"));
    }
    write(dir, name, &text)
}

const SMALL_SEARCH: &str = r#"{"n_trials": 3, "cv_folds": 3, "cv_repeats": 1, "seed": 5}"#;

#[test]
fn invalid_config_exits_two_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.json", r#"{"corpus": "corpus.jsonl", "lda": {"k": 1}}"#);
    let o = copattern(&["pipeline", "--config", "bad.json", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_corpus_exits_three() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "cfg.json", r#"{"corpus": "nowhere.jsonl", "windows": [0]}"#);
    let o = copattern(&["pipeline", "--config", "cfg.json", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn stats_counts_every_publication_once() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path());
    let lines = fs::read_to_string(&corpus).unwrap().lines().count();
    let o = copattern(
        &["stats", "--corpus", corpus.to_str().unwrap(), "--span", "2000-2017", "--out", "stats"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(dir.path().join("stats/publications_per_year.csv")).unwrap();
    let counts: Vec<(u16, usize)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(counts.len(), 18);
    assert_eq!(counts.first().unwrap().0, 2000);
    assert_eq!(counts.last().unwrap().0, 2017);
    assert_eq!(counts.iter().map(|c| c.1).sum::<usize>(), lines);
}

#[test]
fn explain_rejects_a_renamed_feature() {
    let dir = TempDir::new().unwrap();
    let train = feature_csv(dir.path(), "train.csv", &["cn", "jc"], 60);
    let renamed = feature_csv(dir.path(), "renamed.csv", &["cn", "aa"], 20);
    write(dir.path(), "cfg.json", SMALL_SEARCH);
    let o = copattern(
        &["train", "--config", "cfg.json", "--features", "train.csv", "--kind", "tree", "--out", "m"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(train.exists());
    let o = copattern(
        &["explain", "--model", "m/model.json", "--features", renamed.to_str().unwrap(), "--out", "x"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("jc") && err.contains("aa"), "{err}");
}

#[test]
fn evaluate_rejects_an_empty_matrix() {
    let dir = TempDir::new().unwrap();
    feature_csv(dir.path(), "train.csv", &["cn", "jc"], 60);
    feature_csv(dir.path(), "empty.csv", &["cn", "jc"], 0);
    write(dir.path(), "cfg.json", SMALL_SEARCH);
    let o = copattern(
        &["train", "--config", "cfg.json", "--features", "train.csv", "--kind", "tree", "--out", "m"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = copattern(
        &["evaluate", "--model", "m/model.json", "--features", "empty.csv", "--out", "e"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn persisted_logistic_model_explains_identically() {
    let dir = TempDir::new().unwrap();
    feature_csv(dir.path(), "train.csv", &["cn", "jc"], 80);
    feature_csv(dir.path(), "test.csv", &["cn", "jc"], 30);
    write(dir.path(), "cfg.json", SMALL_SEARCH);
    let o = copattern(
        &["train", "--config", "cfg.json", "--features", "train.csv", "--kind", "logistic", "--out", "m"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));

    // reload the model through a copy to exercise the JSON round trip
    let reloaded = copattern::models::ModelFile::read_json(dir.path().join("m/model.json")).unwrap();
    reloaded.write_json(dir.path().join("copy.json")).unwrap();
    for (model, out) in [("m/model.json", "x1"), ("copy.json", "x2")] {
        let o = copattern(
            &["explain", "--model", model, "--features", "test.csv", "--background", "train.csv", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("x1/shap.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("x2/shap.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 31);

    let o = copattern(
        &["evaluate", "--model", "copy.json", "--features", "test.csv", "--out", "e"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("e/evaluation.csv").exists());
}

#[test]
fn smoke_pipeline_writes_reports_and_manifest() {
    let dir = TempDir::new().unwrap();
    synth_corpus(dir.path());
    write(
        dir.path(),
        "cfg.json",
        r#"{
            "corpus": "data/corpus.jsonl",
            "windows": [6],
            "models": ["tree"],
            "lda": {"k": 4, "iterations": 30},
            "n_trials": 2,
            "cv_folds": 3,
            "cv_repeats": 1,
            "seed": 2
        }"#,
    );
    let o = copattern(&["pipeline", "--config", "cfg.json", "--out", "run", "--workers", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["eval_report.csv", "manifest.json", "shap_importance.csv", "config.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let manifest = copattern::pipeline::Manifest::read_json(run.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, "ok");
    assert!(manifest.audits.iter().all(|a| a.violations == 0));
    let report = fs::read_to_string(run.join("eval_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4, "{report}");
}
