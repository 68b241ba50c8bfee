//! Uniform client layer for the four external model capabilities (chat,
//! embedding, emotion classification, grammar checking) with bounded retries,
//! an in-flight concurrency limit, and a content-addressed on-disk response
//! cache for resumable, deterministic reruns.

pub mod fallback;
pub mod http;
pub mod mock;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const EMOTION_LABELS: [&str; 7] = [
    "anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral",
];

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Retries exhausted against a transiently failing endpoint.
    #[error("endpoint-unavailable: {0}")]
    EndpointUnavailable(String),
    /// Endpoint answered with something outside its wire contract.
    #[error("protocol-error: {0}")]
    ProtocolError(String),
    /// Transient failure, eligible for retry. Surfaced only by transports.
    #[error("transient: {0}")]
    Transient(String),
    #[error("cache io error: {0}")]
    CacheIo(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_sequences: Option<Vec<String>>,
    /// Disambiguates otherwise-identical requests (e.g. fresh retry samples)
    /// in the content-addressed cache.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt_salt: Option<u64>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature,
            max_output_tokens: 4096,
            stop_sequences: None,
            attempt_salt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionResult {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarMatch {
    pub offset: usize,
    pub length: usize,
    pub rule_id: String,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    Chat,
    Embed,
    Classify,
    Grammar,
}

impl Capability {
    fn as_str(self) -> &'static str {
        match self {
            Capability::Chat => "chat",
            Capability::Embed => "embed",
            Capability::Classify => "classify",
            Capability::Grammar => "grammar",
        }
    }
}

/// Content address of one request: capability + digest of (model, payload).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub capability: Capability,
    pub digest: String,
}

impl CacheKey {
    pub fn new(capability: Capability, model: &str, payload: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(capability.as_str().as_bytes());
        hasher.update(b"|");
        hasher.update(model.as_bytes());
        hasher.update(b"|");
        hasher.update(payload.as_bytes());
        CacheKey {
            capability,
            digest: hex::encode(hasher.finalize()),
        }
    }
}

/// Abstract endpoint set behind the gateway. Implementations: HTTP, mock.
pub trait Transport: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError>;
    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError>;
    fn classify(&self, text: &str) -> Result<EmotionResult, GatewayError>;
    fn grammar(&self, text: &str) -> Result<Vec<GrammarMatch>, GatewayError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryConfig {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig { max_attempts: 4, base_delay_ms: 250 }
    }
}

/// Append-only content-addressed response cache, one file per key.
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(dir)?;
        Ok(ResponseCache { dir: dir.to_path_buf() })
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir
            .join(key.capability.as_str())
            .join(format!("{}.json", key.digest))
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        std::fs::read_to_string(self.path_for(key)).ok()
    }

    pub fn put(&self, key: &CacheKey, payload: &str) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        // write-then-rename keeps concurrent readers off partial files
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        std::fs::write(&tmp, payload)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Monotone counters for cache-hit accounting and duplicate-call detection.
#[derive(Debug, Default)]
pub struct GatewayStats {
    pub cache_hits: AtomicU64,
    pub cache_misses: AtomicU64,
    pub endpoint_calls: AtomicU64,
}

impl GatewayStats {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.cache_hits.load(Ordering::Relaxed),
            self.cache_misses.load(Ordering::Relaxed),
            self.endpoint_calls.load(Ordering::Relaxed),
        )
    }
}

struct InFlightLimit {
    max: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

impl InFlightLimit {
    fn new(max: usize) -> Self {
        InFlightLimit { max: max.max(1), state: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.state.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        InFlightGuard { limit: self }
    }
}

struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.limit.state.lock().unwrap();
        *n -= 1;
        self.limit.cv.notify_one();
    }
}

/// Client for the four capabilities. All operations are safe to invoke
/// concurrently; responses are cached by content address when a cache is
/// configured.
pub struct Gateway {
    transport: Box<dyn Transport>,
    cache: Option<ResponseCache>,
    retry: RetryConfig,
    limit: InFlightLimit,
    pub stats: GatewayStats,
    pub embed_model: String,
}

impl Gateway {
    pub fn new(
        transport: Box<dyn Transport>,
        cache: Option<ResponseCache>,
        retry: RetryConfig,
        max_in_flight: usize,
    ) -> Self {
        Gateway {
            transport,
            cache,
            retry,
            limit: InFlightLimit::new(max_in_flight),
            stats: GatewayStats::default(),
            embed_model: String::new(),
        }
    }

    fn with_retry<T>(
        &self,
        mut call: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let _guard = self.limit.acquire();
        let mut last_err = String::new();
        for attempt in 0..self.retry.max_attempts {
            self.stats.endpoint_calls.fetch_add(1, Ordering::Relaxed);
            match call() {
                Ok(v) => return Ok(v),
                Err(GatewayError::Transient(msg)) => {
                    last_err = msg;
                    if attempt + 1 < self.retry.max_attempts && self.retry.base_delay_ms > 0 {
                        let delay = self.retry.base_delay_ms << attempt.min(6);
                        std::thread::sleep(std::time::Duration::from_millis(delay));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::EndpointUnavailable(last_err))
    }

    fn cached<T: Serialize + for<'de> Deserialize<'de>>(
        &self,
        key: &CacheKey,
        fetch: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        if let Some(cache) = &self.cache {
            if let Some(raw) = cache.get(key) {
                if let Ok(v) = serde_json::from_str(&raw) {
                    self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(v);
                }
            }
            self.stats.cache_misses.fetch_add(1, Ordering::Relaxed);
        }
        let v = self.with_retry(fetch)?;
        if let Some(cache) = &self.cache {
            let raw = serde_json::to_string(&v)
                .map_err(|e| GatewayError::ProtocolError(e.to_string()))?;
            cache.put(key, &raw)?;
        }
        Ok(v)
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let payload = serde_json::to_string(req)
            .map_err(|e| GatewayError::ProtocolError(e.to_string()))?;
        let key = CacheKey::new(Capability::Chat, &req.model, &payload);
        self.cached(&key, || self.transport.chat(req))
    }

    /// One unit-norm vector per input text, in order. Vectors are normalized
    /// by the gateway regardless of endpoint behavior.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let mut out = Vec::with_capacity(texts.len());
        for text in texts {
            let key = CacheKey::new(Capability::Embed, &self.embed_model, text);
            let model = self.embed_model.clone();
            let v: Vec<f64> = self.cached(&key, || self.transport.embed(&model, text))?;
            out.push(normalize(v)?);
        }
        Ok(out)
    }

    /// Raw top label and confidence; the 0.75 neutral threshold is applied by
    /// the annotation layer so raw scores stay cacheable.
    pub fn classify_emotion(&self, sentence: &str) -> Result<EmotionResult, GatewayError> {
        let key = CacheKey::new(Capability::Classify, "", sentence);
        let res: EmotionResult = self.cached(&key, || self.transport.classify(sentence))?;
        if !(0.0..=1.0).contains(&res.confidence) {
            return Err(GatewayError::ProtocolError(format!(
                "confidence {} outside [0,1]",
                res.confidence
            )));
        }
        if !EMOTION_LABELS.contains(&res.label.as_str()) {
            return Err(GatewayError::ProtocolError(format!(
                "unknown emotion label {:?}",
                res.label
            )));
        }
        Ok(res)
    }

    pub fn grammar_check(&self, text: &str) -> Result<Vec<GrammarMatch>, GatewayError> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        let key = CacheKey::new(Capability::Grammar, "", text);
        let matches: Vec<GrammarMatch> = self.cached(&key, || self.transport.grammar(text))?;
        for m in &matches {
            if m.offset + m.length > text.len() {
                return Err(GatewayError::ProtocolError(format!(
                    "match span {}..{} exceeds text length {}",
                    m.offset,
                    m.offset + m.length,
                    text.len()
                )));
            }
        }
        Ok(matches)
    }
}

fn normalize(v: Vec<f64>) -> Result<Vec<f64>, GatewayError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(GatewayError::ProtocolError("non-normalizable embedding".into()));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}
