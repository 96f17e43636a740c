//! Embedding providers: an HTTP client, a deterministic hashing mock, and a
//! content-addressed cache that wraps either.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ProviderError;
use crate::http::JsonClient;
use crate::parallel;

use super::bm25::analyze;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Length of every vector this provider returns.
    fn dimension(&self) -> usize;

    /// Embed a batch of texts, one vector per text, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

pub fn embed(provider: &dyn EmbeddingProvider, text: &str) -> Result<EmbeddingVector, ProviderError> {
    let mut out = embed_all(provider, &[text.to_string()], 1, 1)?;
    Ok(out.pop().expect("one vector per text"))
}

/// Embed `texts` in batches of `batch_size` with at most `concurrency`
/// requests in flight. Output order matches input order.
pub fn embed_all(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    batch_size: usize,
    concurrency: usize,
) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let batches: Vec<&[String]> = texts.chunks(batch_size.max(1)).collect();
    let results = parallel::map_bounded(&batches, concurrency, |_, batch| provider.embed_batch(batch));
    let mut out = Vec::with_capacity(texts.len());
    for (batch, result) in batches.iter().zip(results) {
        let vectors = result?;
        if vectors.len() != batch.len() {
            return Err(ProviderError::BadResponse(format!(
                "{} vectors for {} texts",
                vectors.len(),
                batch.len()
            )));
        }
        for v in vectors {
            check_vector(&v, provider.dimension())?;
            out.push(v);
        }
    }
    Ok(out)
}

fn check_vector(v: &EmbeddingVector, expected: usize) -> Result<(), ProviderError> {
    if v.dim() != expected {
        return Err(ProviderError::DimensionMismatch {
            expected,
            actual: v.dim(),
        });
    }
    if v.0.iter().any(|x| !x.is_finite()) {
        return Err(ProviderError::BadResponse("non-finite embedding value".into()));
    }
    Ok(())
}

/// Deterministic feature-hashing embedder for hermetic runs. Each analyzed
/// term lands in a signed bucket chosen by SHA-256 of (seed, term); the
/// result is L2-normalized. Texts sharing vocabulary get high cosine.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0);
        HashEmbedder { dimension, seed }
    }

    pub fn vector(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0f32; self.dimension];
        let mut terms = analyze(text);
        if terms.is_empty() {
            terms.push(text.trim().to_string());
        }
        for term in terms {
            let digest = Sha256::new()
                .chain_update(self.seed.to_le_bytes())
                .chain_update(term.as_bytes())
                .finalize();
            let mut idx = [0u8; 8];
            idx.copy_from_slice(&digest[..8]);
            let bucket = (u64::from_le_bytes(idx) % self.dimension as u64) as usize;
            v[bucket] += if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(v)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// HTTP embedding service: POST `{"texts": [...]}`, expects
/// `{"vectors": [[...], ...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, dimension: usize, timeout: Duration) -> Self {
        HttpEmbedder {
            client: JsonClient::new(endpoint, token, timeout),
            dimension,
        }
    }
}

#[derive(Deserialize)]
struct VectorsResponse {
    vectors: Vec<Vec<f32>>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let body = serde_json::json!({ "texts": texts });
        let value = self.client.post(&body)?;
        let resp: VectorsResponse =
            serde_json::from_value(value).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        Ok(resp.vectors.into_iter().map(EmbeddingVector).collect())
    }
}

/// Caches vectors by SHA-256 of the text so repeated texts are embedded once.
pub struct CachedEmbedder<P> {
    inner: P,
    cache: Mutex<HashMap<[u8; 32], EmbeddingVector>>,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P) -> Self {
        CachedEmbedder {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

fn content_key(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let keys: Vec<_> = texts.iter().map(|t| content_key(t)).collect();
        let missing: Vec<String> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k) && seen.insert(**k))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            if fresh.len() != missing.len() {
                return Err(ProviderError::BadResponse(format!(
                    "{} vectors for {} texts",
                    fresh.len(),
                    missing.len()
                )));
            }
            let mut cache = self.cache.lock().unwrap();
            for (t, v) in missing.iter().zip(fresh) {
                cache.insert(content_key(t), v);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Returns pre-planted vectors: text "i" maps to row i.
    struct Fixture {
        rows: Vec<Vec<f32>>,
        dim: usize,
        calls: AtomicUsize,
    }

    impl EmbeddingProvider for Fixture {
        fn dimension(&self) -> usize {
            self.dim
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
            self.calls.fetch_add(texts.len(), Ordering::SeqCst);
            Ok(texts
                .iter()
                .map(|t| EmbeddingVector(self.rows[t.parse::<usize>().unwrap()].clone()))
                .collect())
        }
    }

    #[test]
    fn hash_embedder_is_deterministic() {
        let e = HashEmbedder::new(64, 7);
        let a = embed(&e, "acute kidney injury").unwrap();
        let b = embed(&e, "acute kidney injury").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 64);
        assert_ne!(a, HashEmbedder::new(64, 8).vector("acute kidney injury"));
    }

    #[test]
    fn dimension_mismatch() {
        let f = Fixture {
            rows: vec![vec![0.5; 512]],
            dim: 1024,
            calls: AtomicUsize::new(0),
        };
        assert!(matches!(
            embed(&f, "0"),
            Err(ProviderError::DimensionMismatch {
                expected: 1024,
                actual: 512
            })
        ));
    }

    #[test]
    fn batch_order_preserved() {
        let f = Fixture {
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            dim: 2,
            calls: AtomicUsize::new(0),
        };
        let texts: Vec<String> = ["2", "0", "1"].iter().map(|s| s.to_string()).collect();
        for (batch, conc) in [(1, 3), (2, 2), (8, 1)] {
            let out = embed_all(&f, &texts, batch, conc).unwrap();
            assert_eq!(out.len(), 3);
            assert_eq!(out[0].0, vec![1.0, 1.0]);
            assert_eq!(out[1].0, vec![1.0, 0.0]);
            assert_eq!(out[2].0, vec![0.0, 1.0]);
        }
    }

    #[test]
    fn cache_hits_skip_provider() {
        let f = Fixture {
            rows: vec![vec![1.0], vec![2.0]],
            dim: 1,
            calls: AtomicUsize::new(0),
        };
        let cached = CachedEmbedder::new(f);
        let texts: Vec<String> = ["0", "1", "0"].iter().map(|s| s.to_string()).collect();
        let first = cached.embed_batch(&texts).unwrap();
        let second = cached.embed_batch(&texts).unwrap();
        assert_eq!(first, second);
        assert_eq!(cached.inner.calls.load(Ordering::SeqCst), 2);
        assert_eq!(cached.cached(), 2);
    }
}
