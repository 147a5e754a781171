//! OpenAI-compatible HTTP providers (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionProvider, DecodingParams, EmbeddingProvider, ProviderError, ProviderErrorKind};
use super::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub api_key: String,
    pub timeout_secs: u64,
}

impl HttpProviderConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            timeout_secs: 120,
        }
    }
}

struct Client {
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

impl Client {
    fn new(config: HttpProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}{path}", self.config.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body)
            .map_err(|e| ProviderError::new(ProviderErrorKind::Network, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Network, e.to_string()))?;
        let kind = match status {
            200..=299 => None,
            401 | 403 => Some(ProviderErrorKind::Auth),
            429 => Some(ProviderErrorKind::Quota),
            _ => Some(ProviderErrorKind::Response),
        };
        if let Some(kind) = kind {
            return Err(ProviderError::new(kind, format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text)
            .map_err(|e| ProviderError::new(ProviderErrorKind::Response, e.to_string()))
    }
}

fn malformed(what: &str) -> ProviderError {
    ProviderError::new(ProviderErrorKind::Response, format!("response lacks {what}"))
}

pub struct HttpCompletionProvider(Client);

impl HttpCompletionProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        Self(Client::new(config))
    }
}

impl CompletionProvider for HttpCompletionProvider {
    fn complete(
        &self,
        prompt: &RenderedPrompt,
        model_id: &str,
        params: &DecodingParams,
    ) -> Result<String, ProviderError> {
        let body = json!({
            "model": model_id,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "messages": [{"role": "user", "content": prompt.text}],
        });
        let resp = self.0.post("/chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| malformed("choices[0].message.content"))
    }
}

pub struct HttpEmbeddingProvider(Client);

impl HttpEmbeddingProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        Self(Client::new(config))
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, text: &str, model_id: &str, dimension: usize) -> Result<Vec<f64>, ProviderError> {
        let body = json!({"model": model_id, "input": text, "dimensions": dimension});
        let resp = self.0.post("/embeddings", &body)?;
        resp.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("data[0].embedding"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| malformed("numeric embedding values")))
            .collect()
    }
}
