//! Pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::annotation::{LlmSettings, RetryPolicy};
use crate::error::ConfigError;
use crate::retrieval::{Bm25Params, SemanticThreshold};
use crate::stats::{Assignment, ConcordanceOptions, CorrelationMetric};
use crate::timeline::PairStrategy;

/// Credentials are read from the environment only, never from the config.
pub const ENV_LLM_API_KEY: &str = "CTS_LLM_API_KEY";
pub const ENV_EMBEDDING_TOKEN: &str = "CTS_EMBEDDING_TOKEN";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub chunking: ChunkingConfig,
    pub bm25: Bm25Config,
    pub semantic: SemanticConfig,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub clean: CleanSection,
    pub pairs: PairsConfig,
    pub split: SplitConfig,
    pub concordance: ConcordanceConfig,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Refuse queries under 100 characters.
    pub strict_queries: bool,
    pub notes: Option<PathBuf>,
    pub queries: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub context_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub inclusive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Http,
    /// Deterministic feature-hashing embedder.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingKind,
    pub endpoint: Option<String>,
    pub dimension: usize,
    pub batch_size: usize,
    pub concurrency: usize,
    pub timeout_secs: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    Http,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: LlmKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    /// Directory of `<prompt sha256>.txt` fixtures for the replay provider.
    pub replay_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanSection {
    /// One phrase per line; replaces the built-in list when set.
    pub stop_phrase_file: Option<PathBuf>,
    pub drop_ungrounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    pub strategy: PairStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcordanceConfig {
    pub max_distance: f64,
    pub metric: CorrelationMetric,
    pub assignment: Assignment,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            chunk_size: crate::chunking::DEFAULT_CHUNK_SIZE,
            context_tokens: crate::chunking::DEFAULT_CONTEXT_TOKENS,
        }
    }
}

impl Default for Bm25Config {
    fn default() -> Self {
        let p = Bm25Params::default();
        Bm25Config {
            k1: p.k1,
            b: p.b,
            top_k: crate::retrieval::bm25::DEFAULT_TOP_K,
        }
    }
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig {
            enabled: true,
            threshold: crate::retrieval::DEFAULT_SEMANTIC_THRESHOLD,
            inclusive: true,
        }
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingKind::Http,
            endpoint: None,
            dimension: 1024,
            batch_size: 32,
            concurrency: 4,
            timeout_secs: 60,
            seed: 0,
        }
    }
}

impl Default for LlmConfig {
    fn default() -> Self {
        let s = LlmSettings::default();
        LlmConfig {
            provider: LlmKind::Http,
            endpoint: None,
            model: s.model,
            temperature: s.temperature,
            max_tokens: s.max_tokens,
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 300,
            concurrency: 4,
            replay_dir: None,
        }
    }
}

impl Default for PairsConfig {
    fn default() -> Self {
        PairsConfig {
            strategy: PairStrategy::Adjacent,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl Default for ConcordanceConfig {
    fn default() -> Self {
        let o = ConcordanceOptions::default();
        ConcordanceConfig {
            max_distance: o.max_distance,
            metric: o.metric,
            assignment: o.assignment,
        }
    }
}

fn check(ok: bool, field: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(field, msg))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| ConfigError::new("<file>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Paths in a config file are relative to the file's directory.
    fn resolve_relative_to(&mut self, base: &Path) {
        for p in [
            &mut self.corpus.notes,
            &mut self.corpus.queries,
            &mut self.llm.replay_dir,
            &mut self.clean.stop_phrase_file,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.chunking.chunk_size >= 1, "chunking.chunk_size", "must be at least 1")?;
        check(self.bm25.k1.is_finite() && self.bm25.k1 > 0.0, "bm25.k1", "must be positive")?;
        check((0.0..=1.0).contains(&self.bm25.b), "bm25.b", "must be in [0, 1]")?;
        check(self.bm25.top_k >= 1, "bm25.top_k", "must be at least 1")?;
        check(
            (-1.0..=1.0).contains(&self.semantic.threshold),
            "semantic.threshold",
            "must be in [-1, 1]",
        )?;
        check(self.embedding.dimension >= 1, "embedding.dimension", "must be at least 1")?;
        check(self.embedding.batch_size >= 1, "embedding.batch_size", "must be at least 1")?;
        check(self.embedding.concurrency >= 1, "embedding.concurrency", "must be at least 1")?;
        check(
            self.llm.temperature.is_finite() && self.llm.temperature >= 0.0,
            "llm.temperature",
            "must be non-negative",
        )?;
        check(self.llm.max_tokens >= 1, "llm.max_tokens", "must be at least 1")?;
        check(self.llm.concurrency >= 1, "llm.concurrency", "must be at least 1")?;
        check(
            !matches!(self.pairs.strategy, PairStrategy::Window(0)),
            "pairs.strategy",
            "window must be at least 1",
        )?;
        let sum: f64 = self.split.fractions.iter().sum();
        check(
            self.split.fractions.iter().all(|f| f.is_finite() && *f >= 0.0) && (sum - 1.0).abs() <= 1e-9,
            "split.fractions",
            "must be non-negative and sum to 1",
        )?;
        check(
            (0.0..=2.0).contains(&self.concordance.max_distance),
            "concordance.max_distance",
            "must be in [0, 2]",
        )?;
        Ok(())
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.bm25.k1,
            b: self.bm25.b,
        }
    }

    pub fn semantic_threshold(&self) -> SemanticThreshold {
        SemanticThreshold {
            threshold: self.semantic.threshold,
            inclusive: self.semantic.inclusive,
        }
    }

    pub fn llm_settings(&self) -> LlmSettings {
        LlmSettings {
            model: self.llm.model.clone(),
            temperature: self.llm.temperature,
            max_tokens: self.llm.max_tokens,
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.llm.max_retries,
            base_delay: Duration::from_millis(self.llm.backoff_ms),
            max_delay: Duration::from_secs(60),
        }
    }

    pub fn concordance_options(&self) -> ConcordanceOptions {
        ConcordanceOptions {
            max_distance: self.concordance.max_distance,
            metric: self.concordance.metric,
            assignment: self.concordance.assignment,
        }
    }

    pub fn embedding_endpoint(&self) -> Option<String> {
        self.embedding
            .endpoint
            .clone()
            .filter(|s| !s.trim().is_empty())
    }

    pub fn llm_endpoint(&self) -> Option<String> {
        self.llm
            .endpoint
            .clone()
            .filter(|s| !s.trim().is_empty())
    }
}
