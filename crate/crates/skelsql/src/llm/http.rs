use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;
use skelsql_core::llm::BackendTag;
use skelsql_core::{Completer, CompletionParams, CompletionResult, LlmError};

use crate::net;

pub const API_KEY_VAR: &str = "LLM_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpLimits {
    pub max_in_flight: usize,
    pub requests_per_minute: usize,
    /// Retries after the first attempt for 429, 5xx and transport errors.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub request_timeout: Duration,
}

impl Default for HttpLimits {
    fn default() -> Self {
        HttpLimits {
            max_in_flight: 4,
            requests_per_minute: 60,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            request_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

/// Client for an OpenAI-compatible `POST {base}/completions` endpoint.
pub struct HttpCompleter {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    limits: HttpLimits,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    sent: Mutex<VecDeque<Instant>>,
}

struct Slot<'a>(&'a HttpCompleter);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("slot lock") -= 1;
        self.0.slot_freed.notify_one();
    }
}

enum Failure {
    Retryable(LlmError),
    Fatal(LlmError),
}

impl HttpCompleter {
    pub fn new(base_url: &str, api_key: Option<String>, limits: HttpLimits) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(limits.request_timeout)
            .build()
            .map_err(|e| LlmError::Http { status: None, message: e.to_string() })?;
        Ok(HttpCompleter {
            client,
            endpoint: format!("{}/completions", base_url.trim_end_matches('/')),
            api_key: api_key.filter(|k| !k.is_empty()),
            limits,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            sent: Mutex::new(VecDeque::new()),
        })
    }

    /// Reads the credential from `LLM_API_KEY`.
    pub fn from_env(base_url: &str, limits: HttpLimits) -> Result<Self, LlmError> {
        Self::new(base_url, std::env::var(API_KEY_VAR).ok(), limits)
    }

    pub fn has_credential(&self) -> bool {
        self.api_key.is_some()
    }

    fn acquire(&self) -> Slot<'_> {
        let mut n = self.in_flight.lock().expect("slot lock");
        while *n >= self.limits.max_in_flight.max(1) {
            n = self.slot_freed.wait(n).expect("slot lock");
        }
        *n += 1;
        Slot(self)
    }

    /// Blocks until a request fits in the sliding one-minute window.
    fn pace(&self) {
        let window = Duration::from_secs(60);
        loop {
            let mut sent = self.sent.lock().expect("rate lock");
            let now = Instant::now();
            while sent.front().is_some_and(|t| now.duration_since(*t) >= window) {
                sent.pop_front();
            }
            if sent.len() < self.limits.requests_per_minute.max(1) {
                sent.push_back(now);
                return;
            }
            let wait = window - now.duration_since(*sent.front().expect("nonempty"));
            drop(sent);
            thread::sleep(wait);
        }
    }

    fn send(&self, key: &str, prompt: &str, params: &CompletionParams) -> Result<String, Failure> {
        let body = json!({
            "model": params.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "stop": params.stop,
        });
        self.pace();
        net::record_request();
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| Failure::Retryable(LlmError::Http { status: None, message: e.to_string() }))?;
        let status = resp.status();
        if !status.is_success() {
            let err = LlmError::Http { status: Some(status.as_u16()), message: resp.text().unwrap_or_default() };
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                Failure::Retryable(err)
            } else {
                Failure::Fatal(err)
            });
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| {
            Failure::Fatal(LlmError::Http { status: Some(status.as_u16()), message: format!("bad response body: {e}") })
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| Failure::Fatal(LlmError::Http { status: Some(status.as_u16()), message: "no choices".into() }))
    }
}

impl Completer for HttpCompleter {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        params.validate()?;
        let key = self.api_key.as_deref().ok_or(LlmError::CredentialMissing)?;
        let _slot = self.acquire();
        let started = Instant::now();
        let mut backoff = self.limits.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.send(key, prompt, params) {
                Ok(text) => return Ok(CompletionResult { text, latency: started.elapsed(), backend: BackendTag::Http }),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempt >= self.limits.max_retries => return Err(e),
                Err(Failure::Retryable(e)) => {
                    log::warn!("completion request failed ({e}); retrying in {backoff:?}");
                    thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }
}
