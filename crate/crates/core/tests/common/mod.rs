#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clinical_ts::config::{EmbeddingKind, LlmKind, PipelineConfig};
use clinical_ts::{Pipeline, StageName};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures().join("corpus")
}

pub fn responses() -> HashMap<String, String> {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("responses.json")).unwrap()).unwrap()
}

/// Brute-force BM25 over pre-analyzed documents: every statistic is
/// recomputed by scanning. Returns all documents ranked by descending score,
/// ties by ascending index.
pub fn oracle_bm25(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<(usize, f64)> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut scored: Vec<(usize, f64)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut s = 0.0;
            for q in query {
                let tf = d.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
            }
            (i, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

pub fn hermetic_config(replay_dir: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.embedding.provider = EmbeddingKind::Mock;
    c.embedding.dimension = 256;
    c.llm.provider = LlmKind::Replay;
    c.llm.replay_dir = Some(replay_dir.to_path_buf());
    c.bm25.top_k = 20;
    c
}

/// Write a config plus replay fixtures for the bundled corpus under `work`.
/// Prompt hashes come from a scratch chunk + retrieve run.
pub fn prepare_hermetic(work: &Path) -> PathBuf {
    let replay = work.join("replay");
    std::fs::create_dir_all(&replay).unwrap();
    let config = hermetic_config(&replay);
    let mut scratch = Pipeline::new(config.clone(), Some(corpus_dir()), work.join("scratch"));
    scratch.run(StageName::Chunk).unwrap();
    scratch.run(StageName::Retrieve).unwrap();
    let responses = responses();
    for (doc, _, prompt) in scratch.prompts().unwrap() {
        std::fs::write(
            replay.join(format!("{}.txt", prompt.content_hash())),
            &responses[doc.note_id()],
        )
        .unwrap();
    }
    let path = work.join("config.toml");
    std::fs::write(&path, config.to_toml_string()).unwrap();
    path
}

pub fn cts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cts"))
        .args(args)
        .output()
        .unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
