//! Chat-completion HTTP client with retry, backoff and a global rate cap.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tracing::warn;

use super::{CompletionProvider, DecodeParams, ProviderConfig, ProviderError};
use crate::agents::prompts::RenderedPrompt;

pub struct RemoteProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    pointer: String,
    min_interval: Option<Duration>,
    next_slot: Mutex<Instant>,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| ProviderError::Config("remote mode requires `endpoint`".into()))?;
        let model = cfg.model.clone().ok_or_else(|| ProviderError::Config("remote mode requires `model`".into()))?;
        if !(cfg.timeout_secs > 0.0) {
            return Err(ProviderError::Config("timeout_secs must be positive".into()));
        }
        let min_interval = match cfg.max_requests_per_sec {
            Some(r) if r > 0.0 => Some(Duration::from_secs_f64(1.0 / r)),
            Some(_) => return Err(ProviderError::Config("max_requests_per_sec must be positive".into())),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint,
            model,
            api_key: std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty()),
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            pointer: cfg.response_pointer.clone(),
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        })
    }

    /// Blocks until this caller's slot under the global rate cap.
    fn wait_for_slot(&self) {
        let Some(interval) = self.min_interval else { return };
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn attempt(&self, body: &str) -> Result<String, ProviderError> {
        self.wait_for_slot();
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout { attempts: 1 },
            other => ProviderError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout { attempts: 1 },
            other => ProviderError::Transport(other.to_string()),
        })?;
        match status {
            200..=299 => {
                let v: Value = serde_json::from_str(&text)
                    .map_err(|_| ProviderError::MalformedBody { pointer: self.pointer.clone() })?;
                v.pointer(&self.pointer)
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| ProviderError::MalformedBody { pointer: self.pointer.clone() })
            }
            429 => Err(ProviderError::RateLimited { retry_after }),
            _ => Err(ProviderError::Http { status, body: text.chars().take(200).collect() }),
        }
    }
}

impl CompletionProvider for RemoteProvider {
    fn complete(&self, prompt: &RenderedPrompt, params: &DecodeParams) -> Result<String, ProviderError> {
        let mut payload = json!({
            "model": self.model,
            "temperature": params.temperature,
            "messages": [{ "role": "user", "content": prompt.text }],
        });
        if let Some(m) = params.max_tokens {
            payload["max_tokens"] = json!(m);
        }
        let body = payload.to_string();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt <= self.max_retries => {
                    let mut delay = self.backoff * 2u32.saturating_pow(attempt - 1);
                    if let ProviderError::RateLimited { retry_after: Some(s) } = &e {
                        if let Ok(secs) = s.trim().parse::<u64>() {
                            delay = delay.max(Duration::from_secs(secs.min(60)));
                        }
                    }
                    warn!(template = %prompt.template_id, attempt, error = %e, "retrying provider call");
                    std::thread::sleep(delay);
                }
                Err(ProviderError::Timeout { .. }) => return Err(ProviderError::Timeout { attempts: attempt }),
                Err(e) => return Err(e),
            }
        }
    }
}
