//! LLM providers and the retry loop around them.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{AnnotationError, ProviderError};
use crate::http::JsonClient;

use super::prompt::PromptBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for Box<P> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// Chat-completions style endpoint. Sends `{model, messages, temperature,
/// max_tokens}` and reads `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    client: JsonClient,
}

impl HttpLlm {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        HttpLlm {
            client: JsonClient::new(endpoint, api_key, timeout),
        }
    }
}

impl LlmProvider for HttpLlm {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.client.post(&body)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }
}

/// Serves canned responses keyed by the hex SHA-256 of the rendered prompt.
#[derive(Debug, Clone, Default)]
pub struct ReplayLlm {
    fixtures: HashMap<String, String>,
}

impl ReplayLlm {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load every `<hash>.txt` file in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut fixtures = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                fixtures.insert(stem.to_string(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(ReplayLlm { fixtures })
    }

    pub fn insert(&mut self, prompt_hash: impl Into<String>, response: impl Into<String>) {
        self.fixtures.insert(prompt_hash.into(), response.into());
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

/// Hash of the prompt content a request carries; matches
/// [`PromptBundle::content_hash`] for requests built by [`chat_request`].
pub fn request_hash(request: &ChatRequest) -> String {
    use sha2::{Digest, Sha256};
    let rendered = format!("{}\n{}", request.system, request.user);
    super::prompt::hex(&Sha256::digest(rendered.as_bytes()))
}

impl LlmProvider for ReplayLlm {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let key = request_hash(request);
        self.fixtures
            .get(&key)
            .cloned()
            .ok_or(ProviderError::MissingFixture(key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            model: "llama-3.1-8b-instruct".into(),
            temperature: 0.0,
            max_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(2u32.saturating_pow(retry))
            .min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    /// Provider output, unmodified.
    pub raw: String,
    pub attempts: u32,
}

pub fn chat_request(bundle: &PromptBundle, settings: &LlmSettings) -> ChatRequest {
    ChatRequest {
        model: settings.model.clone(),
        system: bundle.system_text.clone(),
        user: bundle.user_text.clone(),
        temperature: settings.temperature,
        max_tokens: settings.max_tokens,
    }
}

/// Send the prompt, retrying transient failures with exponential backoff.
pub fn annotate(
    provider: &dyn LlmProvider,
    bundle: &PromptBundle,
    settings: &LlmSettings,
    policy: &RetryPolicy,
) -> Result<Annotation, AnnotationError> {
    let request = chat_request(bundle, settings);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match provider.complete(&request) {
            Ok(raw) => return Ok(Annotation { raw, attempts }),
            Err(e) if e.is_transient() => {
                if attempts > policy.max_retries {
                    return Err(ProviderError::RetriesExhausted {
                        attempts,
                        last: Box::new(e),
                    }
                    .into());
                }
                log::debug!("attempt {attempts} failed ({e}), retrying");
                std::thread::sleep(policy.delay(attempts - 1));
            }
            Err(e) => return Err(e.into()),
        }
    }
}
