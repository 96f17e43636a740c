mod common;

use std::fs;
use std::path::Path;

use common::{corpus_dir, cts, prepare_hermetic, s};

fn error_json(out: &std::process::Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not json: {stderr}"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn chunk_on_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::write(input.join("notes.csv"), "note_id,hadm_id,text\n").unwrap();
    fs::write(input.join("queries.csv"), "note_id,text\n").unwrap();
    let out = dir.path().join("out");
    let o = cts(&["chunk", "--input", s(&input), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("chunks.jsonl")).unwrap(), "");
    assert!(out.join("manifests/chunk.json").is_file());
}

#[test]
fn retrieve_without_embedding_endpoint_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cts(&["chunk", "--input", s(&corpus_dir()), "--output", s(&out)]);
    assert!(o.status.success());
    let o = cts(&["retrieve", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = error_json(&o);
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "embedding.endpoint");
}

#[test]
fn semantic_disabled_needs_no_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[semantic]\nenabled = false\n").unwrap();
    let out = dir.path().join("out");
    for stage in ["chunk", "retrieve"] {
        let o = cts(&["--config", s(&cfg), stage, "--input", s(&corpus_dir()), "--output", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(out.join("retrieval.jsonl")).unwrap();
    assert!(!text.contains("\"semantic\""));
    assert!(text.contains("\"fused\""));
}

#[test]
fn missing_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cts(&["chunk", "--input", s(dir.path()), "--output", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"], "data");
}

#[test]
fn malformed_row_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("notes.csv"), "note_id,hadm_id,text\na,1,ok\nb,2,\n").unwrap();
    fs::write(dir.path().join("queries.csv"), "note_id,text\na,q\n").unwrap();
    let o = cts(&["chunk", "--input", s(dir.path()), "--output", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("row 2"));
}

#[test]
fn bad_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[split]\nfractions = [0.9, 0.2, 0.1]\n").unwrap();
    let o = cts(&["--config", s(&cfg), "split", "--output", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["field"], "split.fractions");
}

#[test]
fn missing_replay_fixture_is_provider_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = prepare_hermetic(dir.path());
    // empty the fixture directory
    for e in fs::read_dir(dir.path().join("replay")).unwrap() {
        fs::remove_file(e.unwrap().path()).unwrap();
    }
    let out = dir.path().join("out");
    let o = cts(&["--config", s(&cfg_path), "all", "--input", s(&corpus_dir()), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "provider");
}

#[test]
fn all_equals_stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_hermetic(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = cts(&["--config", s(&cfg), "--seed", "3", "all", "--input", s(&corpus_dir()), "--output", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for stage in ["chunk", "retrieve", "annotate", "clean", "bin", "pairs", "sequences", "split", "stats"] {
        let o = cts(&["--config", s(&cfg), "--seed", "3", stage, "--input", s(&corpus_dir()), "--output", s(&b)]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifests/annotate.json")).unwrap()).unwrap();
    assert_eq!(manifest["prompt_template_version"], "v1");
    assert!(manifest["outputs"]["parsed.jsonl"].as_str().unwrap().len() == 64);
}

#[test]
fn concordance_of_a_table_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = prepare_hermetic(dir.path());
    let out = dir.path().join("out");
    let o = cts(&["--config", s(&cfg), "all", "--input", s(&corpus_dir()), "--output", s(&out)]);
    assert!(o.status.success());
    let table = out.join("events.csv");
    let o = cts(&[
        "--config",
        s(&cfg),
        "concordance",
        "--reference",
        s(&table),
        "--candidate",
        s(&table),
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("concordance.json")).unwrap()).unwrap();
    assert_eq!(report["match_rate"], 1.0);
    assert!(out.join("concordance.txt").is_file());
}
