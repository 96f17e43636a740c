//! Lexical (BM25) and embedding-similarity retrieval of chunks against the
//! brief-course query, plus duplicate-free fusion of the two candidate sets.

pub mod bm25;
pub mod embedding;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::RetrievalError;

pub use bm25::{Bm25Index, Bm25Params};
pub use embedding::{CachedEmbedder, EmbeddingProvider, EmbeddingVector, HashEmbedder, HttpEmbedder};

pub const DEFAULT_SEMANTIC_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Bm25,
    Semantic,
    Fused,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Bm25 => "bm25",
            Channel::Semantic => "semantic",
            Channel::Fused => "fused",
        }
    }
}

/// Ranked chunk ids for one note from one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub note_id: String,
    pub channel: Channel,
    pub chunk_ids: Vec<usize>,
    pub scores: Vec<f64>,
    /// Which channel contributed each id. Equal to `channel` everywhere
    /// except in fused results.
    pub origins: Vec<Channel>,
}

impl RetrievalResult {
    pub fn empty(note_id: &str, channel: Channel) -> Self {
        RetrievalResult {
            note_id: note_id.to_string(),
            channel,
            chunk_ids: Vec::new(),
            scores: Vec::new(),
            origins: Vec::new(),
        }
    }

    pub(crate) fn from_scored(note_id: &str, channel: Channel, scored: Vec<(usize, f64)>) -> Self {
        let origins = vec![channel; scored.len()];
        let (chunk_ids, scores) = scored.into_iter().unzip();
        RetrievalResult {
            note_id: note_id.to_string(),
            channel,
            chunk_ids,
            scores,
            origins,
        }
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn id_set(&self) -> HashSet<usize> {
        self.chunk_ids.iter().copied().collect()
    }

    pub fn records(&self) -> impl Iterator<Item = RetrievalRecord> + '_ {
        self.chunk_ids
            .iter()
            .zip(&self.scores)
            .map(|(&chunk_id, &score)| RetrievalRecord {
                note_id: self.note_id.clone(),
                chunk_id,
                score,
                channel: self.channel,
            })
    }
}

/// One line of the retrieval dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub note_id: String,
    pub chunk_id: usize,
    pub score: f64,
    pub channel: Channel,
}

pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut uu, mut vv) = (0f64, 0f64, 0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticThreshold {
    pub threshold: f64,
    /// `true` keeps chunks scoring exactly at the threshold.
    pub inclusive: bool,
}

impl Default for SemanticThreshold {
    fn default() -> Self {
        SemanticThreshold {
            threshold: DEFAULT_SEMANTIC_THRESHOLD,
            inclusive: true,
        }
    }
}

impl SemanticThreshold {
    pub fn passes(&self, score: f64) -> bool {
        if self.inclusive {
            score >= self.threshold
        } else {
            score > self.threshold
        }
    }
}

/// Keep chunks whose cosine with the query clears the threshold, ordered by
/// descending score then ascending chunk id. Zero chunk vectors never pass.
pub fn semantic_filter(
    note_id: &str,
    query: &EmbeddingVector,
    chunks: &[(usize, EmbeddingVector)],
    threshold: SemanticThreshold,
) -> Result<RetrievalResult, RetrievalError> {
    let mut scored = Vec::new();
    for (id, v) in chunks {
        match cosine(query.as_slice(), v.as_slice()) {
            Ok(s) if threshold.passes(s) => scored.push((*id, s)),
            Ok(_) | Err(RetrievalError::ZeroVector) => {}
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RetrievalResult::from_scored(note_id, Channel::Semantic, scored))
}

/// Duplicate-free union: BM25 ids in BM25 order, then semantic-only ids in
/// semantic order. Each id keeps the score of the channel that contributed it.
pub fn fuse(bm25: &RetrievalResult, semantic: &RetrievalResult) -> Result<RetrievalResult, RetrievalError> {
    if bm25.note_id != semantic.note_id {
        return Err(RetrievalError::ChannelMismatch(format!(
            "notes differ ({} vs {})",
            bm25.note_id, semantic.note_id
        )));
    }
    if bm25.channel != Channel::Bm25 || semantic.channel != Channel::Semantic {
        return Err(RetrievalError::ChannelMismatch(format!(
            "expected bm25 + semantic, got {} + {}",
            bm25.channel.as_str(),
            semantic.channel.as_str()
        )));
    }
    let mut out = RetrievalResult::empty(&bm25.note_id, Channel::Fused);
    let mut seen = HashSet::new();
    for r in [bm25, semantic] {
        for (i, &id) in r.chunk_ids.iter().enumerate() {
            if seen.insert(id) {
                out.chunk_ids.push(id);
                out.scores.push(r.scores[i]);
                out.origins.push(r.channel);
            }
        }
    }
    Ok(out)
}
