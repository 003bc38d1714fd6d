use std::path::Path;
use std::process::{Command, Output};

fn ocrlm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocrlm"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, json: &str) {
    std::fs::write(dir.join("experiment.json"), json).unwrap();
}

#[test]
fn missing_corpus_directory_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"corpora": {"fr": "nowhere/fr"}}"#);
    let out = ocrlm(dir.path(), &["stats"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/fr"));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = ocrlm(dir.path(), &["--config", "absent.json", "stats"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"models": [{"model": "glove", "rate_profile": "slow"}]}"#);
    assert_eq!(ocrlm(dir.path(), &["train"]).status.code(), Some(2));
}

#[test]
fn evaluate_without_manifest_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"models": [{"model": "ppmi"}]}"#);
    let out = ocrlm(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_without_generated_noise_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"models": [{"model": "ppmi"}], "noise": {"source": {"synthetic": {}}, "levels": [0.1]}}"#,
    );
    assert_eq!(ocrlm(dir.path(), &["train"]).status.code(), Some(3));
}

#[test]
fn paired_corpus_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    let words = ["red", "green", "blue", "cat", "dog", "bird", "tree", "leaf"];
    for d in 0..20 {
        let gt: Vec<&str> = (0..60).map(|i| words[(i * 7 + d * 3) % words.len()]).collect();
        let gt = gt.join(" ");
        // Swap one letter per document on the OCR side.
        let ocr = gt.replacen("dog", "dug", 1);
        std::fs::write(corpus.join(format!("d{d:02}.gt.txt")), &gt).unwrap();
        std::fs::write(corpus.join(format!("d{d:02}.ocr.txt")), &ocr).unwrap();
    }
    write_config(
        dir.path(),
        r#"{
            "corpora": {"en": "corpus"},
            "format": "paired_files",
            "models": [{"model": "ppmi"}, {"model": "sgns", "rate_profile": "fast", "dim": 8, "epochs": 1}],
            "runs": 1,
            "min_count": 1,
            "bootstrap": {"resamples": 50, "confidence": 0.95, "seed": 1}
        }"#,
    );
    for cmd in ["stats", "error-rates", "train", "evaluate", "report"] {
        let out = ocrlm(dir.path(), &[cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("curves/en/ppmi.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("N,k,mean,ci_low,ci_high"));
    assert_eq!(csv.lines().count(), 101);
    let svg = std::fs::read_to_string(out.join("figures/en.svg")).unwrap();
    assert!(svg.contains("<polygon") && svg.contains("<polyline"));
    let stats = std::fs::read_to_string(out.join("stats/stats.csv")).unwrap();
    assert!(stats.lines().nth(1).unwrap().starts_with("en,20,20,"));
    assert!(out.join("error_rates/en/error_rates.csv").is_file());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 4);
}
