//! Split a note into 5-token chunks with 10 tokens of context each side.

use clinical_ts::chunking::{chunk_note, DEFAULT_CHUNK_SIZE, DEFAULT_CONTEXT_TOKENS};

fn main() {
    let text = "Patient presented with fever and chills for two days. Blood cultures grew E. coli. \
                Started on ceftriaxone; afebrile by hospital day 3.";
    let chunks = chunk_note("note-1", text, DEFAULT_CHUNK_SIZE, DEFAULT_CONTEXT_TOKENS);
    for c in &chunks {
        let core = &text[c.chunk.start()..c.chunk.end()];
        println!("#{:<2} [{:>3},{:>3}) {:<40} | {}", c.chunk.chunk_id, c.chunk.start(), c.chunk.end(), core, c.rendered);
    }
    assert_eq!(chunks.len(), 23usize.div_ceil(DEFAULT_CHUNK_SIZE));
}
