//! End-to-end checks of the kgnav binary: exit codes and basic output shape.

mod common;

use std::path::Path;
use std::process::Command;

use common::movie_corpus;

fn kgnav() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kgnav"))
}

fn write_corpus(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let corpus = movie_corpus(11, 10);
    let kb = dir.join("kb.txt");
    let qa = dir.join("qa_1hop.txt");
    std::fs::write(&kb, &corpus.kb_text).unwrap();
    std::fs::write(&qa, &corpus.qa_text).unwrap();
    (kb, qa)
}

#[test]
fn stats_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, _) = write_corpus(dir.path());
    let out = kgnav().args(["stats", "--kb"]).arg(&kb).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("entities") && text.contains("relations") && text.contains("triples"));
}

#[test]
fn missing_kb_is_a_data_error() {
    let out = kgnav()
        .args(["stats", "--kb", "/nonexistent/kb.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = kgnav().args(["stats", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = kgnav().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn ask_without_topic_entity_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, _) = write_corpus(dir.path());
    let out = kgnav()
        .args(["ask", "--kb"])
        .arg(&kb)
        .args(["--question", "who directed the movie"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ask_answers_from_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, _) = write_corpus(dir.path());
    let out = kgnav()
        .args(["ask", "--kb"])
        .arg(&kb)
        .args([
            "--question",
            "who directed the movie [Movie 0]",
            "--hops",
            "1",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("answer: "), "stdout: {text}");
    assert!(text.contains("Director "), "stdout: {text}");
}

#[test]
fn http_backend_without_api_key_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, _) = write_corpus(dir.path());
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        "[llm]\nbackend = \"http\"\nbase_url = \"http://localhost:9\"\n",
    )
    .unwrap();
    let out = kgnav()
        .args(["ask", "--kb"])
        .arg(&kb)
        .args(["--question", "who directed the movie [Movie 0]", "--config"])
        .arg(&config)
        .env_remove("KGNAV_API_KEY")
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("KGNAV_API_KEY"));
}

#[test]
fn eval_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, qa) = write_corpus(dir.path());
    let report = dir.path().join("report.json");
    let trace = dir.path().join("trace.jsonl");
    let out = kgnav()
        .args(["eval", "--kb"])
        .arg(&kb)
        .arg("--qa")
        .arg(&qa)
        .arg("--report")
        .arg(&report)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let parsed: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(parsed["question_count"], 10);
    assert_eq!(parsed["dataset"], "qa_1hop.txt");
    for line in std::fs::read_to_string(&trace).unwrap().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn cache_show_and_clear() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, _) = write_corpus(dir.path());
    let cache = dir.path().join("cache.jsonl");
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            "[llm]\nbackend = \"mock-lexical\"\ncache_path = \"{}\"\n",
            cache.display()
        ),
    )
    .unwrap();
    let out = kgnav()
        .args(["ask", "--kb"])
        .arg(&kb)
        .args([
            "--question",
            "who directed the movie [Movie 0]",
            "--hops",
            "1",
            "--config",
        ])
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let shown = kgnav()
        .args(["cache", "show", "--path"])
        .arg(&cache)
        .output()
        .unwrap();
    assert!(shown.status.success());
    assert!(!shown.stdout.is_empty());
    let cleared = kgnav()
        .args(["cache", "clear", "--path"])
        .arg(&cache)
        .output()
        .unwrap();
    assert!(cleared.status.success());
    assert!(!cache.exists());
}
