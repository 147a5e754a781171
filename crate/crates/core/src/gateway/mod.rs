//! Uniform access to the completion and embedding providers with
//! content-addressed record/replay.
//!
//! Every request is keyed by a hash of its declared inputs (template id and
//! version, bindings, attempt, model id, decoding params). In `record` mode a
//! miss calls the provider and persists the exchange; in the replay modes the
//! provider is never contacted and a miss is reported as
//! [`GatewayError::ReplayMiss`]. `strict-replay` additionally tells callers
//! to treat a miss as fatal rather than as a per-item failure.
//!
//! This is the only module that performs network I/O.

mod cache;
mod http;
pub mod offline;
mod templates;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{canonical_json, sha256_hex};

pub use cache::{EmbeddingExchange, PromptExchange, ReplayCache};
pub use http::{HttpCompletionProvider, HttpEmbeddingProvider, HttpProviderConfig};
pub use templates::{
    bindings, placeholders, render_prompt, template, template_versions, PromptTemplate,
    RenderedPrompt, TemplateId, ANSWER_EXAMPLES, DEFINITION_EXAMPLES, SUMMARY_EXAMPLE_OUTPUT,
};

pub const DEFAULT_EMBEDDING_DIMENSION: usize = 1536;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_SCENARIO_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    Network,
    Auth,
    Quota,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("provider {kind:?} error: {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum GatewayError {
    #[error("template `{template}` needs a binding for `{name}`")]
    MissingBinding { template: TemplateId, name: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no cached {kind} for request {hash}")]
    ReplayMiss { kind: &'static str, hash: String },
    #[error("no {0} provider configured")]
    NotConfigured(&'static str),
    #[error("cache error: {0}")]
    Cache(String),
}

impl GatewayError {
    pub fn is_replay_miss(&self) -> bool {
        matches!(self, GatewayError::ReplayMiss { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatewayMode {
    Record,
    Replay,
    StrictReplay,
}

impl GatewayMode {
    pub fn is_strict(self) -> bool {
        self == GatewayMode::StrictReplay
    }

    pub fn may_call_provider(self) -> bool {
        self == GatewayMode::Record
    }
}

impl fmt::Display for GatewayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GatewayMode::Record => "record",
            GatewayMode::Replay => "replay",
            GatewayMode::StrictReplay => "strict-replay",
        })
    }
}

impl FromStr for GatewayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            "strict-replay" | "strict_replay" => Ok(GatewayMode::StrictReplay),
            other => Err(format!(
                "unknown gateway mode `{other}` (expected record, replay or strict-replay)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl DecodingParams {
    pub fn for_template(id: TemplateId, scenario_temperature: f64) -> Self {
        Self {
            temperature: if id.is_deterministic() {
                0.0
            } else {
                scenario_temperature
            },
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_text_hash: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source_text: &str) -> Result<Self, GatewayError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::InvalidInput(
                "embedding must be a non-empty vector of finite values".into(),
            ));
        }
        Ok(Self {
            values,
            source_text_hash: sha256_hex(source_text.as_bytes()),
        })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete(
        &self,
        prompt: &RenderedPrompt,
        model_id: &str,
        params: &DecodingParams,
    ) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str, model_id: &str, dimension: usize)
        -> Result<Vec<f64>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewaySettings {
    pub mode: GatewayMode,
    pub model_id: String,
    pub embed_model_id: String,
    pub dimension: usize,
    pub max_in_flight: usize,
    pub scenario_temperature: f64,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            mode: GatewayMode::StrictReplay,
            model_id: "gpt-4o".into(),
            embed_model_id: "text-embedding-3-small".into(),
            dimension: DEFAULT_EMBEDDING_DIMENSION,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            scenario_temperature: DEFAULT_SCENARIO_TEMPERATURE,
        }
    }
}

/// Counting semaphore bounding concurrent provider calls.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut p = self.permits.lock().unwrap();
            while *p == 0 {
                p = self.cv.wait(p).unwrap();
            }
            *p -= 1;
        }
        let out = f();
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CallStats {
    pub completion_calls: u64,
    pub embedding_calls: u64,
    pub completion_hits: u64,
    pub embedding_hits: u64,
}

pub struct Gateway {
    settings: GatewaySettings,
    cache: ReplayCache,
    completer: Option<Arc<dyn CompletionProvider>>,
    embedder: Option<Arc<dyn EmbeddingProvider>>,
    limiter: Limiter,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    completion_calls: AtomicU64,
    embedding_calls: AtomicU64,
    completion_hits: AtomicU64,
    embedding_hits: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("settings", &self.settings)
            .field("cache", &self.cache.root())
            .field("stats", &self.stats())
            .finish()
    }
}

impl Gateway {
    pub fn new(settings: GatewaySettings, cache: ReplayCache) -> Self {
        let limiter = Limiter::new(settings.max_in_flight);
        Self {
            settings,
            cache,
            completer: None,
            embedder: None,
            limiter,
            inflight: Mutex::new(HashMap::new()),
            completion_calls: AtomicU64::new(0),
            embedding_calls: AtomicU64::new(0),
            completion_hits: AtomicU64::new(0),
            embedding_hits: AtomicU64::new(0),
        }
    }

    pub fn with_completion_provider(mut self, p: Arc<dyn CompletionProvider>) -> Self {
        self.completer = Some(p);
        self
    }

    pub fn with_embedding_provider(mut self, p: Arc<dyn EmbeddingProvider>) -> Self {
        self.embedder = Some(p);
        self
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    pub fn mode(&self) -> GatewayMode {
        self.settings.mode
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }

    pub fn stats(&self) -> CallStats {
        CallStats {
            completion_calls: self.completion_calls.load(Ordering::SeqCst),
            embedding_calls: self.embedding_calls.load(Ordering::SeqCst),
            completion_hits: self.completion_hits.load(Ordering::SeqCst),
            embedding_hits: self.embedding_hits.load(Ordering::SeqCst),
        }
    }

    pub fn provider_calls(&self) -> u64 {
        let s = self.stats();
        s.completion_calls + s.embedding_calls
    }

    pub fn params_for(&self, id: TemplateId) -> DecodingParams {
        DecodingParams::for_template(id, self.settings.scenario_temperature)
    }

    /// Hash of everything that determines a completion.
    pub fn request_hash(&self, prompt: &RenderedPrompt, params: &DecodingParams) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            template_id: TemplateId,
            version: &'a str,
            bindings: &'a std::collections::BTreeMap<String, String>,
            attempt: u32,
            model_id: &'a str,
            params: &'a DecodingParams,
        }
        let key = Key {
            template_id: prompt.template_id,
            version: &prompt.version,
            bindings: &prompt.bindings,
            attempt: prompt.attempt,
            model_id: &self.settings.model_id,
            params,
        };
        sha256_hex(canonical_json(&key).expect("key serializes").as_bytes())
    }

    pub fn embedding_hash(&self, text: &str) -> String {
        let key = serde_json::json!({
            "model_id": self.settings.embed_model_id,
            "dimension": self.settings.dimension,
            "text": text,
        });
        sha256_hex(canonical_json(&key).expect("key serializes").as_bytes())
    }

    fn flight_lock(&self, hash: &str) -> Arc<Mutex<()>> {
        self.inflight
            .lock()
            .unwrap()
            .entry(hash.to_string())
            .or_default()
            .clone()
    }

    fn release_flight(&self, hash: &str, lock: Arc<Mutex<()>>) {
        let mut map = self.inflight.lock().unwrap();
        drop(lock);
        if map.get(hash).is_some_and(|l| Arc::strong_count(l) == 1) {
            map.remove(hash);
        }
    }

    pub fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &DecodingParams,
    ) -> Result<String, GatewayError> {
        if prompt.text.trim().is_empty() {
            return Err(GatewayError::InvalidInput("prompt is empty".into()));
        }
        let hash = self.request_hash(prompt, params);
        let lock = self.flight_lock(&hash);
        let result = {
            let _guard = lock.lock().unwrap();
            self.complete_locked(&hash, prompt, params)
        };
        self.release_flight(&hash, lock);
        result
    }

    fn complete_locked(
        &self,
        hash: &str,
        prompt: &RenderedPrompt,
        params: &DecodingParams,
    ) -> Result<String, GatewayError> {
        if let Some(ex) = self.cache.load_completion(hash)? {
            self.completion_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(ex.raw_completion);
        }
        if !self.mode().may_call_provider() {
            return Err(GatewayError::ReplayMiss {
                kind: "completion",
                hash: hash.to_string(),
            });
        }
        let provider = self
            .completer
            .as_ref()
            .ok_or(GatewayError::NotConfigured("completion"))?;
        self.completion_calls.fetch_add(1, Ordering::SeqCst);
        let raw = self
            .limiter
            .run(|| provider.complete(prompt, &self.settings.model_id, params))?;
        self.cache.store_completion(&PromptExchange {
            request_hash: hash.to_string(),
            template_id: prompt.template_id,
            template_version: prompt.version.clone(),
            attempt: prompt.attempt,
            bindings: prompt.bindings.clone(),
            params: *params,
            provider_model_id: self.settings.model_id.clone(),
            rendered_prompt: prompt.text.clone(),
            raw_completion: raw.clone(),
            timestamp: now_rfc3339(),
        })?;
        Ok(raw)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidInput("cannot embed empty text".into()));
        }
        let hash = self.embedding_hash(text);
        let lock = self.flight_lock(&hash);
        let result = {
            let _guard = lock.lock().unwrap();
            self.embed_locked(&hash, text)
        };
        self.release_flight(&hash, lock);
        result
    }

    fn embed_locked(&self, hash: &str, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if let Some(ex) = self.cache.load_embedding(hash)? {
            self.embedding_hits.fetch_add(1, Ordering::SeqCst);
            return EmbeddingVector::new(ex.values, text);
        }
        if !self.mode().may_call_provider() {
            return Err(GatewayError::ReplayMiss {
                kind: "embedding",
                hash: hash.to_string(),
            });
        }
        let provider = self
            .embedder
            .as_ref()
            .ok_or(GatewayError::NotConfigured("embedding"))?;
        self.embedding_calls.fetch_add(1, Ordering::SeqCst);
        let values = self.limiter.run(|| {
            provider.embed(text, &self.settings.embed_model_id, self.settings.dimension)
        })?;
        if values.len() != self.settings.dimension {
            return Err(GatewayError::Provider(ProviderError::new(
                ProviderErrorKind::Response,
                format!(
                    "embedding has dimension {} but {} is configured",
                    values.len(),
                    self.settings.dimension
                ),
            )));
        }
        let vector = EmbeddingVector::new(values, text)?;
        self.cache.store_embedding(&EmbeddingExchange {
            request_hash: hash.to_string(),
            provider_model_id: self.settings.embed_model_id.clone(),
            dimension: vector.dimension(),
            text: text.to_string(),
            source_text_hash: vector.source_text_hash.clone(),
            values: vector.values.clone(),
            timestamp: now_rfc3339(),
        })?;
        Ok(vector)
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Counting {
        calls: AtomicUsize,
    }

    impl CompletionProvider for Counting {
        fn complete(
            &self,
            prompt: &RenderedPrompt,
            _model: &str,
            _params: &DecodingParams,
        ) -> Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo:{}", prompt.binding("snippet").unwrap_or("")))
        }
    }

    impl EmbeddingProvider for Counting {
        fn embed(&self, text: &str, _m: &str, dim: usize) -> Result<Vec<f64>, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok((0..dim).map(|i| (text.len() + i) as f64).collect())
        }
    }

    fn gateway(mode: GatewayMode, dir: &std::path::Path) -> (Gateway, Arc<Counting>) {
        let provider = Arc::new(Counting {
            calls: AtomicUsize::new(0),
        });
        let settings = GatewaySettings {
            mode,
            dimension: 4,
            ..GatewaySettings::default()
        };
        let gw = Gateway::new(settings, ReplayCache::new(dir))
            .with_completion_provider(provider.clone())
            .with_embedding_provider(provider.clone());
        (gw, provider)
    }

    fn prompt(snippet: &str) -> RenderedPrompt {
        render_prompt(TemplateId::ClassifyPower, &bindings([("snippet", snippet)])).unwrap()
    }

    #[test]
    fn record_twice_calls_provider_once() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, provider) = gateway(GatewayMode::Record, dir.path());
        let p = prompt("a");
        let params = gw.params_for(TemplateId::ClassifyPower);
        let first = gw.complete(&p, &params).unwrap();
        let second = gw.complete(&p, &params).unwrap();
        assert_eq!(first, second);
        assert_eq!(provider.calls.load(Ordering::SeqCst), 1);
        assert_eq!(gw.stats().completion_hits, 1);
    }

    #[test]
    fn replay_hit_makes_no_calls_and_strict_miss_errors() {
        let dir = tempfile::tempdir().unwrap();
        let params = DecodingParams::for_template(TemplateId::ClassifyPower, 0.7);
        let recorded = {
            let (gw, _) = gateway(GatewayMode::Record, dir.path());
            gw.complete(&prompt("cached"), &params).unwrap()
        };
        let (gw, provider) = gateway(GatewayMode::StrictReplay, dir.path());
        assert_eq!(gw.complete(&prompt("cached"), &params).unwrap(), recorded);
        let err = gw.complete(&prompt("missing"), &params).unwrap_err();
        assert!(err.is_replay_miss());
        assert_eq!(provider.calls.load(Ordering::SeqCst), 0);

        let (gw, provider) = gateway(GatewayMode::Replay, dir.path());
        assert!(gw.complete(&prompt("missing"), &params).unwrap_err().is_replay_miss());
        assert_eq!(provider.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn request_hash_depends_on_declared_inputs_only() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, _) = gateway(GatewayMode::Record, dir.path());
        let params = gw.params_for(TemplateId::ClassifyPower);
        let a = gw.request_hash(&prompt("x"), &params);
        assert_eq!(a, gw.request_hash(&prompt("x"), &params));
        assert_ne!(a, gw.request_hash(&prompt("y"), &params));
        assert_ne!(a, gw.request_hash(&prompt("x").retry("again"), &params));
        let hot = DecodingParams {
            temperature: 0.5,
            ..params
        };
        assert_ne!(a, gw.request_hash(&prompt("x"), &hot));
    }

    #[test]
    fn cache_files_are_named_by_hash_and_reload_stably() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, _) = gateway(GatewayMode::Record, dir.path());
        let params = gw.params_for(TemplateId::ClassifyPower);
        let p = prompt("z");
        gw.complete(&p, &params).unwrap();
        let hash = gw.request_hash(&p, &params);
        let exchanges = gw.cache().completions().unwrap();
        assert_eq!(exchanges.len(), 1);
        assert_eq!(exchanges[0].request_hash, hash);
        assert!(gw.cache().completion_path(&hash).exists());
    }

    #[test]
    fn embeddings_are_cached_and_validated() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, provider) = gateway(GatewayMode::Record, dir.path());
        let a = gw.embed("hello").unwrap();
        let b = gw.embed("hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(provider.calls.load(Ordering::SeqCst), 1);
        assert!(matches!(gw.embed("  "), Err(GatewayError::InvalidInput(_))));
    }

    #[test]
    fn concurrent_identical_requests_coalesce() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, provider) = gateway(GatewayMode::Record, dir.path());
        let params = gw.params_for(TemplateId::ClassifyPower);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| gw.complete(&prompt("same"), &params).unwrap());
            }
        });
        assert_eq!(provider.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn modes_parse() {
        assert_eq!("strict-replay".parse::<GatewayMode>().unwrap(), GatewayMode::StrictReplay);
        assert!("live".parse::<GatewayMode>().is_err());
    }
}
