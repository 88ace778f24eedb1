//! Completion providers.
//!
//! Every provider maps a rendered prompt to raw response text. Parsing and
//! validation happen in [`super::parse`], so providers never see schemas.

mod remote;
mod stub;

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompts::RenderedPrompt;

pub use remote::RemoteProvider;
pub use stub::StubProvider;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited (retry-after: {retry_after:?})")]
    RateLimited { retry_after: Option<String> },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response body has no text at `{pointer}`")]
    MalformedBody { pointer: String },
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("scripted provider has no response left for `{0}`")]
    ScriptExhausted(String),
}

impl ProviderError {
    /// Worth another attempt: timeouts, transport failures, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Timeout { .. } | ProviderError::Transport(_) | ProviderError::RateLimited { .. } => true,
            ProviderError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { temperature: 0.7, max_tokens: None }
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt, params: &DecodeParams) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn complete(&self, prompt: &RenderedPrompt, params: &DecodeParams) -> Result<String, ProviderError> {
        (**self).complete(prompt, params)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn complete(&self, prompt: &RenderedPrompt, params: &DecodeParams) -> Result<String, ProviderError> {
        (**self).complete(prompt, params)
    }
}

pub fn complete(
    provider: &dyn CompletionProvider,
    prompt: &RenderedPrompt,
    params: &DecodeParams,
) -> Result<String, ProviderError> {
    provider.complete(prompt, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Remote,
    #[default]
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    /// Global cap on requests per second across all threads.
    pub max_requests_per_sec: Option<f64>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// JSON pointer to the response text.
    pub response_pointer: String,
    /// Stub phrasing seed.
    pub seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Stub,
            endpoint: None,
            model: None,
            temperature: 0.7,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            max_requests_per_sec: None,
            api_key_env: "POSAWARE_API_KEY".into(),
            response_pointer: "/choices/0/message/content".into(),
            seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn stub(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams { temperature: self.temperature, max_tokens: None }
    }

    pub fn build(&self) -> Result<Arc<dyn CompletionProvider>, ProviderError> {
        match self.mode {
            ProviderMode::Stub => Ok(Arc::new(StubProvider::new(self.seed))),
            ProviderMode::Remote => Ok(Arc::new(RemoteProvider::from_config(self)?)),
        }
    }
}

/// Replays canned responses per template id, in order.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queues: Mutex<BTreeMap<String, VecDeque<Result<String, ProviderError>>>>,
    calls: Mutex<Vec<RenderedPrompt>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, template_id: &str, response: impl Into<String>) -> &Self {
        self.push_result(template_id, Ok(response.into()))
    }

    pub fn push_result(&self, template_id: &str, response: Result<String, ProviderError>) -> &Self {
        self.queues.lock().expect("lock").entry(template_id.to_string()).or_default().push_back(response);
        self
    }

    pub fn calls(&self) -> Vec<RenderedPrompt> {
        self.calls.lock().expect("lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("lock").len()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(&self, prompt: &RenderedPrompt, _: &DecodeParams) -> Result<String, ProviderError> {
        self.calls.lock().expect("lock").push(prompt.clone());
        self.queues
            .lock()
            .expect("lock")
            .get_mut(&prompt.template_id)
            .and_then(VecDeque::pop_front)
            .unwrap_or_else(|| Err(ProviderError::ScriptExhausted(prompt.template_id.clone())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub template_id: String,
    pub prompt: String,
    pub response: Result<String, String>,
}

/// Wraps another provider and keeps every exchange.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<Vec<Exchange>>,
}

impl<P: CompletionProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("lock").clone()
    }

    pub fn count(&self, template_id: &str) -> usize {
        self.log.lock().expect("lock").iter().filter(|e| e.template_id == template_id).count()
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn complete(&self, prompt: &RenderedPrompt, params: &DecodeParams) -> Result<String, ProviderError> {
        let result = self.inner.complete(prompt, params);
        self.log.lock().expect("lock").push(Exchange {
            template_id: prompt.template_id.clone(),
            prompt: prompt.text.clone(),
            response: result.clone().map_err(|e| e.to_string()),
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(id: &str) -> RenderedPrompt {
        RenderedPrompt { template_id: id.into(), text: "x".into() }
    }

    #[test]
    fn scripted_replays_in_order_then_errors() {
        let p = ScriptedProvider::new();
        p.push("a", "one").push("a", "two");
        let d = DecodeParams::default();
        assert_eq!(p.complete(&prompt("a"), &d).unwrap(), "one");
        assert_eq!(p.complete(&prompt("a"), &d).unwrap(), "two");
        assert_eq!(p.complete(&prompt("a"), &d), Err(ProviderError::ScriptExhausted("a".into())));
        assert_eq!(p.call_count(), 3);
    }

    #[test]
    fn stub_config_needs_no_network_fields() {
        let cfg = ProviderConfig::stub(7);
        assert!(cfg.endpoint.is_none());
        assert!(cfg.build().is_ok());
    }

    #[test]
    fn remote_config_without_endpoint_is_rejected() {
        let cfg = ProviderConfig { mode: ProviderMode::Remote, ..ProviderConfig::default() };
        assert!(matches!(cfg.build(), Err(ProviderError::Config(_))));
    }

    #[test]
    fn transient_classification() {
        assert!(ProviderError::Http { status: 503, body: String::new() }.is_transient());
        assert!(!ProviderError::Http { status: 400, body: String::new() }.is_transient());
        assert!(ProviderError::RateLimited { retry_after: None }.is_transient());
    }
}
