//! Full pipeline on the bundled five-note corpus, hermetically: the mock
//! embedder stands in for the embedding service and a replay LLM serves
//! canned responses keyed by prompt hash.

use std::collections::HashMap;
use std::path::Path;

use clinical_ts::annotation::ReplayLlm;
use clinical_ts::config::{EmbeddingKind, PipelineConfig};
use clinical_ts::{Pipeline, StageName};

fn main() -> clinical_ts::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let responses: HashMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(fixtures.join("responses.json")).unwrap()).unwrap();
    let out = tempfile::tempdir().unwrap();

    let mut config = PipelineConfig::default();
    config.embedding.provider = EmbeddingKind::Mock;
    config.embedding.dimension = 256;
    config.bm25.top_k = 20;

    let mut pipeline = Pipeline::new(config.clone(), Some(fixtures.join("corpus")), out.path());
    pipeline.run(StageName::Chunk)?;
    pipeline.run(StageName::Retrieve)?;

    // Prompts depend only on the chunk and retrieval outputs, so the replay
    // fixtures can be keyed now.
    let mut replay = ReplayLlm::new();
    for (doc, chunks, prompt) in pipeline.prompts()? {
        println!("{}: {} chunks in prompt, hash {}", doc.note_id(), chunks.len(), &prompt.content_hash()[..12]);
        replay.insert(prompt.content_hash(), responses[doc.note_id()].clone());
    }

    let mut pipeline = pipeline.with_llm(replay);
    for stage in &StageName::CHAIN[2..] {
        pipeline.run(*stage)?;
    }

    for name in ["events.csv", "pairs.csv", "sequences.txt", "stats.txt"] {
        println!("--- {name}");
        print!("{}", std::fs::read_to_string(out.path().join(name)).unwrap());
    }
    Ok(())
}
