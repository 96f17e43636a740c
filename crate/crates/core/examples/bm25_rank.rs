//! Rank a note's contextual chunks against a summary query with BM25.

use clinical_ts::chunking::chunk_note;
use clinical_ts::retrieval::bm25::{analyze, Bm25Index, Bm25Params};

fn main() -> Result<(), clinical_ts::error::RetrievalError> {
    let note = "Admitted with chest pain radiating to the left arm. Troponin elevated at 2.3. \
                Cardiac catheterization showed an occluded LAD, treated with a drug eluting stent. \
                Discharged on aspirin, ticagrelor and atorvastatin.";
    let query = "NSTEMI with LAD occlusion treated with stent; started aspirin and ticagrelor.";
    let chunks = chunk_note("n1", note, 5, 10);
    let index = Bm25Index::build(&chunks, Bm25Params::default())?;
    let terms = analyze(query);
    println!("{} chunks, avgdl {:.1}, query terms {:?}", index.len(), index.avgdl(), terms);
    let top = index.top_k(&terms, 3);
    for (id, score) in top.chunk_ids.iter().zip(&top.scores) {
        println!("{score:>8.4}  chunk {id}: {}", chunks[*id].chunk.text());
    }
    Ok(())
}
