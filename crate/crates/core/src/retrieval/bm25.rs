//! Okapi BM25 over the contextual chunks of a single note.
//!
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//!
//! The `1 +` inside the logarithm keeps idf positive even when a term
//! occurs in every chunk, which is common in small per-note corpora.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chunking::ContextualChunk;
use crate::error::RetrievalError;

use super::{Channel, RetrievalResult};

pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

/// Lowercase and strip leading/trailing punctuation. Returns `None` for
/// tokens that are pure punctuation.
pub fn normalize_term(token: &str) -> Option<String> {
    let trimmed = token.trim_matches(|c: char| !c.is_alphanumeric());
    (!trimmed.is_empty()).then(|| trimmed.to_lowercase())
}

/// Split text on whitespace and normalize every term.
pub fn analyze(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_term).collect()
}

#[derive(Debug, Clone)]
struct Doc {
    chunk_id: usize,
    len: usize,
    tf: HashMap<String, u32>,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    note_id: String,
    params: Bm25Params,
    docs: Vec<Doc>,
    by_chunk: HashMap<usize, usize>,
    df: HashMap<String, u32>,
    avgdl: f64,
}

impl Bm25Index {
    /// Index the rendered (context-augmented) text of each chunk.
    pub fn build(chunks: &[ContextualChunk], params: Bm25Params) -> Result<Self, RetrievalError> {
        let first = chunks.first().ok_or(RetrievalError::EmptyCorpus)?;
        Self::from_texts(
            &first.chunk.note_id,
            chunks.iter().map(|c| (c.chunk.chunk_id, c.rendered.as_str())),
            params,
        )
    }

    pub fn from_texts<'a>(
        note_id: &str,
        texts: impl IntoIterator<Item = (usize, &'a str)>,
        params: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let mut docs = Vec::new();
        let mut by_chunk = HashMap::new();
        let mut df: HashMap<String, u32> = HashMap::new();
        for (chunk_id, text) in texts {
            let terms = analyze(text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &terms {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            by_chunk.insert(chunk_id, docs.len());
            docs.push(Doc {
                chunk_id,
                len: terms.len(),
                tf,
            });
        }
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let avgdl = docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64;
        Ok(Bm25Index {
            note_id: note_id.to_string(),
            params,
            docs,
            by_chunk,
            df,
            avgdl,
        })
    }

    pub fn note_id(&self) -> &str {
        &self.note_id
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn tf(&self, chunk_id: usize, term: &str) -> Option<u32> {
        let doc = &self.docs[*self.by_chunk.get(&chunk_id)?];
        Some(doc.tf.get(term).copied().unwrap_or(0))
    }

    pub fn doc_len(&self, chunk_id: usize) -> Option<usize> {
        self.by_chunk.get(&chunk_id).map(|&i| self.docs[i].len)
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.docs.iter().map(|d| d.chunk_id)
    }

    /// Number of distinct indexed terms.
    pub fn vocabulary_len(&self) -> usize {
        self.df.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score one chunk. Query terms are treated as a bag: a term repeated in
    /// the query contributes once per occurrence.
    pub fn score<S: AsRef<str>>(&self, query_terms: &[S], chunk_id: usize) -> Result<f64, RetrievalError> {
        let idx = *self
            .by_chunk
            .get(&chunk_id)
            .ok_or(RetrievalError::UnknownChunk(chunk_id))?;
        Ok(self.score_doc(&self.docs[idx], query_terms))
    }

    fn score_doc<S: AsRef<str>>(&self, doc: &Doc, query_terms: &[S]) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let mut total = 0.0;
        for term in query_terms {
            let Some(&tf) = doc.tf.get(term.as_ref()) else {
                continue;
            };
            let tf = tf as f64;
            let norm = 1.0 - b + b * doc.len as f64 / self.avgdl;
            total += self.idf(term.as_ref()) * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        total
    }

    /// The `k` best chunks by descending score, ties broken by ascending
    /// chunk id. Chunks scoring zero are still ranked.
    pub fn top_k<S: AsRef<str>>(&self, query_terms: &[S], k: usize) -> RetrievalResult {
        let mut scored: Vec<(usize, f64)> = self
            .docs
            .iter()
            .map(|d| (d.chunk_id, self.score_doc(d, query_terms)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        RetrievalResult::from_scored(&self.note_id, Channel::Bm25, scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(texts: &[&str], params: Bm25Params) -> Bm25Index {
        Bm25Index::from_texts("n", texts.iter().copied().enumerate(), params).unwrap()
    }

    #[test]
    fn statistics() {
        let idx = index(&["a b c d e", "a f g h i", "a j"], Bm25Params::default());
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.avgdl(), 4.0);
        assert_eq!(idx.df("a"), 3);
        assert_eq!(idx.df("j"), 1);
        assert_eq!(idx.df("zzz"), 0);
    }

    #[test]
    fn empty_corpus() {
        let none: [(usize, &str); 0] = [];
        assert!(matches!(
            Bm25Index::from_texts("n", none, Bm25Params::default()),
            Err(RetrievalError::EmptyCorpus)
        ));
        assert!(matches!(
            Bm25Index::build(&[], Bm25Params::default()),
            Err(RetrievalError::EmptyCorpus)
        ));
    }

    #[test]
    fn terms_are_lowercased_and_trimmed() {
        let idx = index(&["Fever, RASH.", "(fever)"], Bm25Params::default());
        assert_eq!(idx.df("fever"), 2);
        assert_eq!(idx.tf(0, "rash"), Some(1));
        assert_eq!(analyze("-- ** ok"), vec!["ok"]);
    }

    #[test]
    fn absent_terms_score_zero() {
        let idx = index(&["fever and rash", "cough"], Bm25Params::default());
        assert_eq!(idx.score(&["headache"], 0).unwrap(), 0.0);
        assert!(matches!(idx.score(&["x"], 9), Err(RetrievalError::UnknownChunk(9))));
    }

    #[test]
    fn doubled_query_term_doubles_score() {
        let params = Bm25Params::default();
        let idx = index(&["fever fever rash"], params);
        let single = idx.score(&["fever"], 0).unwrap();
        let double = idx.score(&["fever", "fever"], 0).unwrap();
        // hand formula: N=1, df=1, tf=2, |d|=avgdl=3
        let idf = (1.0f64 + (1.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let expected = idf * 2.0 * (params.k1 + 1.0) / (2.0 + params.k1);
        assert!((single - expected).abs() < 1e-12);
        assert!((double - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn matching_chunk_ranks_first() {
        let idx = index(&["cough at night", "fever since monday", "no distress"], Bm25Params::default());
        let res = idx.top_k(&["fever"], 3);
        assert_eq!(res.chunk_ids, vec![1, 0, 2]);
        assert!(res.scores[0] > 0.0);
        assert_eq!(res.scores[1], 0.0);
        let best = idx.top_k(&["fever"], 1);
        assert_eq!(best.chunk_ids, vec![1]);
    }

    #[test]
    fn default_k_caps_results() {
        let texts: Vec<String> = (0..400).map(|i| format!("w{} common", i % 37)).collect();
        let idx = Bm25Index::from_texts(
            "n",
            texts.iter().enumerate().map(|(i, t)| (i, t.as_str())),
            Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(idx.top_k(&["w3", "common"], DEFAULT_TOP_K).len(), 100);
    }

    #[test]
    fn b_zero_ignores_length() {
        let idx = index(&["fever x", "fever y z w v u"], Bm25Params { k1: 1.2, b: 0.0 });
        let a = idx.score(&["fever"], 0).unwrap();
        let b = idx.score(&["fever"], 1).unwrap();
        assert_eq!(a, b);
    }
}
