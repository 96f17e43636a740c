//! Cosine threshold filtering over embedded chunks, fused with BM25 hits.

use clinical_ts::chunking::chunk_note;
use clinical_ts::retrieval::bm25::{analyze, Bm25Index, Bm25Params};
use clinical_ts::retrieval::embedding::{embed_all, HashEmbedder};
use clinical_ts::retrieval::{fuse, semantic_filter, SemanticThreshold};

fn main() -> clinical_ts::Result<()> {
    let note = "Hypoxic respiratory failure requiring intubation on arrival. Extubated on day 3. \
                Diuresed with furosemide for volume overload. Transitioned to oral torsemide.";
    let query = "intubation for respiratory failure";
    let chunks = chunk_note("n1", note, 5, 10);

    let bm25 = Bm25Index::build(&chunks, Bm25Params::default())?.top_k(&analyze(query), 2);

    // The mock embedder hashes terms into buckets, so chunks sharing many
    // query terms score high; a real service plugs in the same way.
    let embedder = HashEmbedder::new(512, 7);
    let mut texts = vec![query.to_string()];
    texts.extend(chunks.iter().map(|c| c.rendered.clone()));
    let mut vectors = embed_all(&embedder, &texts, 8, 2)?;
    let chunk_vecs: Vec<_> = chunks.iter().map(|c| c.chunk.chunk_id).zip(vectors.drain(1..)).collect();
    let threshold = SemanticThreshold {
        threshold: 0.3,
        inclusive: true,
    };
    let semantic = semantic_filter("n1", &vectors[0], &chunk_vecs, threshold)?;
    let fused = fuse(&bm25, &semantic)?;

    println!("bm25     {:?}", bm25.chunk_ids);
    println!("semantic {:?} {:?}", semantic.chunk_ids, semantic.scores);
    println!("fused    {:?}", fused.chunk_ids);
    for (id, origin) in fused.chunk_ids.iter().zip(&fused.origins) {
        println!("  {id:>2} via {:<8} {}", origin.as_str(), chunks[*id].chunk.text());
    }
    Ok(())
}
