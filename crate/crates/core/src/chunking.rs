//! Whitespace tokenization, fixed-size chunking, and context windows.

use serde::{Deserialize, Serialize};

pub const DEFAULT_CHUNK_SIZE: usize = 5;
pub const DEFAULT_CONTEXT_TOKENS: usize = 10;

/// A maximal run of non-whitespace characters with its byte span in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub note_id: String,
    pub chunk_id: usize,
    pub tokens: Vec<Token>,
}

impl Chunk {
    pub fn text(&self) -> String {
        join_tokens(&self.tokens)
    }

    pub fn start(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.start)
    }

    pub fn end(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextualChunk {
    pub chunk: Chunk,
    pub left_context: Vec<Token>,
    pub right_context: Vec<Token>,
    /// Left context, core, and right context joined by single spaces.
    pub rendered: String,
}

/// One line of the chunk dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub note_id: String,
    pub chunk_id: usize,
    pub text: String,
    pub rendered: String,
    pub start: usize,
    pub end: usize,
}

impl From<&ContextualChunk> for ChunkRecord {
    fn from(c: &ContextualChunk) -> Self {
        ChunkRecord {
            note_id: c.chunk.note_id.clone(),
            chunk_id: c.chunk.chunk_id,
            text: c.chunk.text(),
            rendered: c.rendered.clone(),
            start: c.chunk.start(),
            end: c.chunk.end(),
        }
    }
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token {
                    text: text[s..i].to_string(),
                    start: s,
                    end: i,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: text[s..].to_string(),
            start: s,
            end: text.len(),
        });
    }
    tokens
}

/// Greedy left-to-right partition into chunks of `chunk_size` tokens; the
/// last chunk keeps whatever remains.
///
/// Panics if `chunk_size` is zero.
pub fn chunk(note_id: &str, tokens: &[Token], chunk_size: usize) -> Vec<Chunk> {
    assert!(chunk_size >= 1, "chunk_size must be positive");
    tokens
        .chunks(chunk_size)
        .enumerate()
        .map(|(chunk_id, toks)| Chunk {
            note_id: note_id.to_string(),
            chunk_id,
            tokens: toks.to_vec(),
        })
        .collect()
}

/// Attach up to `context_tokens` neighbouring tokens on each side of every
/// chunk. `chunks` must have been produced from `tokens` by [`chunk`].
pub fn contextualize(chunks: &[Chunk], tokens: &[Token], context_tokens: usize) -> Vec<ContextualChunk> {
    let mut offset = 0;
    chunks
        .iter()
        .map(|c| {
            let first = offset;
            let last = first + c.tokens.len();
            offset = last;
            let left = tokens[first.saturating_sub(context_tokens)..first].to_vec();
            let right = tokens[last..(last + context_tokens).min(tokens.len())].to_vec();
            let rendered = left
                .iter()
                .chain(&c.tokens)
                .chain(&right)
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            ContextualChunk {
                chunk: c.clone(),
                left_context: left,
                right_context: right,
                rendered,
            }
        })
        .collect()
}

/// Tokenize, chunk, and contextualize one note.
pub fn chunk_note(note_id: &str, text: &str, chunk_size: usize, context_tokens: usize) -> Vec<ContextualChunk> {
    let tokens = tokenize(text);
    let chunks = chunk(note_id, &tokens, chunk_size);
    contextualize(&chunks, &tokens, context_tokens)
}

pub fn join_tokens(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
}
