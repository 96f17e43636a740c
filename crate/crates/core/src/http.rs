use std::time::Duration;

use crate::error::ProviderError;

/// Minimal blocking JSON-over-HTTP client shared by the LLM and embedding
/// providers. Non-2xx statuses are returned as [`ProviderError::Status`].
#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    bearer: Option<String>,
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, bearer: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        JsonClient {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.into(),
            bearer,
        }
    }

    pub fn post(&self, body: &serde_json::Value) -> Result<serde_json::Value, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(transport)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Status { status, body });
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))
    }
}

fn transport(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::Transport(other.to_string()),
    }
}
