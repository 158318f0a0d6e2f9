//! Uniform access to chat-completion models.
//!
//! Every stage talks to an [`LlmGateway`]. Implementations:
//!
//! * [`ReplayGateway`] serves scripted responses from a JSON-lines
//!   transcript, consumed in order per [`Tag`].
//! * [`OpenAiGateway`] calls an OpenAI-compatible `/chat/completions`
//!   endpoint with rate limiting and retry on HTTP 429.
//! * [`CachedGateway`] wraps either of them with a content-addressed file
//!   cache.
//! * [`Recorder`] wraps any gateway and keeps every exchange for usage
//!   accounting.

mod cache;
mod openai;
mod rate_limit;
mod replay;
mod usage;

use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::CachedGateway;
pub use openai::{OpenAiGateway, OpenAiSettings};
pub use rate_limit::TokenBucket;
pub use replay::{ReplayEntry, ReplayGateway};
pub use usage::{usage_report, CostRatios, UsageReport, UsageTotals};

/// Pipeline stage that issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Mine,
    Reduce,
    Plan,
    Correct,
    Refine,
    Exec,
    Map,
    Baseline,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Mine => "mine",
            Tag::Reduce => "reduce",
            Tag::Plan => "plan",
            Tag::Correct => "correct",
            Tag::Refine => "refine",
            Tag::Exec => "exec",
            Tag::Map => "map",
            Tag::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub tag: Tag,
}

impl LlmRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must not be empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of everything that affects the
    /// response. The stage tag is not part of the key.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::json!({
            "max_output_tokens": self.max_output_tokens,
            "messages": self.messages,
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
        });
        // serde_json::Map is ordered by key, so this text is canonical.
        let text = serde_json::to_string(&canonical).expect("request serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Concatenated message contents, for size estimates.
    pub fn prompt_chars(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Live,
    Cache,
    Replay,
}

/// One request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub request: LlmRequest,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cache_key: String,
    pub source: Source,
    /// Wall time of the call; zero for replay and cache hits.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("replay script exhausted for tag '{tag}' after {consumed} responses")]
    ScriptExhausted { tag: Tag, consumed: usize },
    #[error("context window exceeded: {0}")]
    ContextOverflow(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
}

impl GatewayError {
    /// Short machine-readable kind, used in logs and records.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Network(_) => "network",
            GatewayError::HttpStatus { .. } => "http_status",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::ScriptExhausted { .. } => "script_exhausted",
            GatewayError::ContextOverflow(_) => "context_overflow",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::MalformedResponse(_) => "malformed_response",
        }
    }
}

pub trait LlmGateway: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError>;

    /// True when responses depend on call order (the replay backend). Callers
    /// must then issue requests sequentially in a fixed order.
    fn order_sensitive(&self) -> bool {
        false
    }
}

impl<G: LlmGateway + ?Sized> LlmGateway for &G {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        (**self).complete(request)
    }

    fn order_sensitive(&self) -> bool {
        (**self).order_sensitive()
    }
}

impl<G: LlmGateway + ?Sized> LlmGateway for Box<G> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        (**self).complete(request)
    }

    fn order_sensitive(&self) -> bool {
        (**self).order_sensitive()
    }
}

/// Keeps a copy of every successful exchange that passes through.
pub struct Recorder<G> {
    inner: G,
    log: Mutex<Vec<LlmExchange>>,
}

impl<G: LlmGateway> Recorder<G> {
    pub fn new(inner: G) -> Self {
        Recorder {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<LlmExchange> {
        self.log.lock().expect("recorder lock").clone()
    }

    pub fn take(&self) -> Vec<LlmExchange> {
        std::mem::take(&mut *self.log.lock().expect("recorder lock"))
    }

    pub fn totals(&self) -> UsageTotals {
        usage_report(&self.log.lock().expect("recorder lock")).total
    }
}

impl<G: LlmGateway> LlmGateway for Recorder<G> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, GatewayError> {
        let exchange = self.inner.complete(request)?;
        self.log.lock().expect("recorder lock").push(exchange.clone());
        Ok(exchange)
    }

    fn order_sensitive(&self) -> bool {
        self.inner.order_sensitive()
    }
}

/// Per-stage output limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTokenLimits {
    /// Used by every stage except answer mapping.
    pub default: u32,
    pub map: u32,
}

impl Default for StageTokenLimits {
    fn default() -> Self {
        StageTokenLimits {
            default: 1024,
            map: 8,
        }
    }
}

/// Model id and decoding parameters shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: StageTokenLimits,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model: "gpt-4".to_string(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: StageTokenLimits::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_model(model: impl Into<String>) -> Self {
        ModelConfig {
            model: model.into(),
            ..Self::default()
        }
    }

    pub fn max_tokens_for(&self, tag: Tag) -> u32 {
        match tag {
            Tag::Map => self.max_tokens.map,
            _ => self.max_tokens.default,
        }
    }

    pub fn request(&self, tag: Tag, messages: Vec<Message>) -> LlmRequest {
        self.request_with_limit(tag, messages, self.max_tokens_for(tag))
    }

    pub fn request_with_limit(&self, tag: Tag, messages: Vec<Message>, max_output_tokens: u32) -> LlmRequest {
        LlmRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            top_p: self.top_p,
            max_output_tokens,
            tag,
        }
    }

    /// Single-user-message request.
    pub fn prompt(&self, tag: Tag, prompt: impl Into<String>) -> LlmRequest {
        self.request(tag, vec![Message::user(prompt)])
    }
}

/// Rough token count (four characters per token) used for context-window
/// checks; no tokenizer is bundled.
pub fn estimate_tokens(chars: usize) -> usize {
    chars.div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_key_ignores_tag_but_not_content() {
        let cfg = ModelConfig::default();
        let a = cfg.prompt(Tag::Plan, "hello");
        let mut b = a.clone();
        b.tag = Tag::Correct;
        assert_eq!(a.cache_key(), b.cache_key());
        let c = cfg.prompt(Tag::Plan, "hello!");
        assert_ne!(a.cache_key(), c.cache_key());
        let mut d = a.clone();
        d.max_output_tokens = 7;
        assert_ne!(a.cache_key(), d.cache_key());
        assert_eq!(a.cache_key().len(), 64);
    }

    #[test]
    fn request_validation() {
        let cfg = ModelConfig::default();
        let mut r = cfg.prompt(Tag::Exec, "x");
        assert!(r.validate().is_ok());
        r.temperature = 2.5;
        assert!(matches!(r.validate(), Err(GatewayError::InvalidRequest(_))));
        r.temperature = 0.0;
        r.messages.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn stage_limits() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.prompt(Tag::Map, "x").max_output_tokens, 8);
        assert_eq!(cfg.prompt(Tag::Plan, "x").max_output_tokens, 1024);
        assert_eq!(cfg.prompt(Tag::Exec, "x").max_output_tokens, 1024);
    }
}
