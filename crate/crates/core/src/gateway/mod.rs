//! Chat-completion client for OpenAI-compatible endpoints.
//!
//! Requests go to `{endpoint_url}/v1/chat/completions` with a single user
//! message. Transport failures (connection errors, timeouts, HTTP 5xx, 408 and
//! 429) are retried with exponential backoff; every other outcome is returned
//! on the first attempt.

pub mod mock;

use std::num::NonZeroUsize;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::GatewayError;

/// Default cap on generated tokens.
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 1024;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub model_name: String,
    pub endpoint_url: String,
    /// Zero selects greedy decoding.
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
}

fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}

impl DecodingConfig {
    pub fn greedy(model_name: impl Into<String>, endpoint_url: impl Into<String>) -> Self {
        DecodingConfig {
            model_name: model_name.into(),
            endpoint_url: endpoint_url.into(),
            temperature: 0.0,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn chat_url(&self) -> String {
        format!("{}/v1/chat/completions", self.endpoint_url.trim_end_matches('/'))
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig::greedy("Qwen2-72B-Instruct", "http://127.0.0.1:8000")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    /// Requests sent, including retries.
    pub attempts: u32,
}

/// Retry schedule for transport failures: the n-th retry waits
/// `base_backoff * 2^(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base_backoff: Duration::ZERO,
        }
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        self.base_backoff * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

/// Anything that can turn a prompt into a completion.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str, config: &DecodingConfig)
        -> Result<CompletionResult, GatewayError>;
}

/// Blocking HTTP client. Cheap to clone and safe to share between threads.
#[derive(Clone)]
pub struct LlmClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
    api_key: Option<String>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("retry", &self.retry)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

enum Attempt {
    Done(Result<(String, FinishReason), GatewayError>),
    Transient(String),
}

impl LlmClient {
    pub fn new(timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LlmClient {
            agent,
            retry,
            api_key: None,
        }
    }

    /// Bearer token sent with every request.
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    fn send_once(&self, url: &str, body: &str) -> Attempt {
        let mut request = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match request.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(format!("reading body: {e}")),
        };
        match status {
            200..=299 => Attempt::Done(parse_chat_response(&text)),
            408 | 429 | 500..=599 => Attempt::Transient(format!("HTTP {status}: {}", snippet(&text))),
            _ => Attempt::Done(Err(GatewayError::Rejected {
                status,
                body: snippet(&text),
            })),
        }
    }
}

impl Default for LlmClient {
    fn default() -> Self {
        LlmClient::new(DEFAULT_TIMEOUT, RetryPolicy::default())
    }
}

impl CompletionBackend for LlmClient {
    fn complete(
        &self,
        prompt: &str,
        config: &DecodingConfig,
    ) -> Result<CompletionResult, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        config.validate()?;
        let url = config.chat_url();
        let body = json!({
            "model": config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "max_tokens": config.max_new_tokens,
        })
        .to_string();

        let started = Instant::now();
        let mut last_error = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                let wait = self.retry.backoff(attempt);
                log::debug!("retry {attempt} for {url} in {wait:?}: {last_error}");
                std::thread::sleep(wait);
            }
            match self.send_once(&url, &body) {
                Attempt::Done(result) => {
                    let (text, finish_reason) = result?;
                    return Ok(CompletionResult {
                        text,
                        finish_reason,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt + 1,
                    });
                }
                Attempt::Transient(msg) => last_error = msg,
            }
        }
        Err(GatewayError::Transport {
            attempts: self.retry.max_retries + 1,
            message: last_error,
        })
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

fn parse_chat_response(body: &str) -> Result<(String, FinishReason), GatewayError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("response is not JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Protocol("missing choices[0]".into()))?;
    let text = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?
        .to_string();
    let finish = match choice.get("finish_reason").and_then(Value::as_str) {
        None | Some("stop") | Some("eos") => FinishReason::Stop,
        Some("length") => {
            return Err(GatewayError::Budget {
                partial_len: text.len(),
                partial: text,
            })
        }
        Some(_) => FinishReason::Error,
    };
    if text.is_empty() && finish != FinishReason::Error {
        return Err(GatewayError::Protocol("empty completion".into()));
    }
    Ok((text, finish))
}

/// Map `f` over `items` with at most `parallelism` calls running at once.
/// Results come back in input order.
pub fn bounded_map<T, R, F>(items: &[T], parallelism: NonZeroUsize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use rayon::prelude::*;
    if parallelism.get() == 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.get().min(items.len()))
        .build()
        .expect("failed to start worker pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Complete every prompt; per-item failures stay in their slot.
pub fn batch_complete(
    backend: &dyn CompletionBackend,
    prompts: &[String],
    config: &DecodingConfig,
    parallelism: NonZeroUsize,
) -> Vec<Result<CompletionResult, GatewayError>> {
    bounded_map(prompts, parallelism, |p| backend.complete(p, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_decoding_is_greedy_with_1024_tokens() {
        let c = DecodingConfig::default();
        assert!(c.is_greedy());
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_new_tokens, 1024);
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy::default();
        assert_eq!(r.max_retries, 3);
        assert_eq!(r.backoff(1), Duration::from_millis(500));
        assert_eq!(r.backoff(2), Duration::from_millis(1000));
        assert_eq!(r.backoff(3), Duration::from_millis(2000));
    }

    #[test]
    fn chat_url_joins_cleanly() {
        let c = DecodingConfig::greedy("m", "http://h:1/");
        assert_eq!(c.chat_url(), "http://h:1/v1/chat/completions");
    }

    #[test]
    fn parses_well_formed_response() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Answer: Yes"},"finish_reason":"stop"}]}"#;
        assert_eq!(
            parse_chat_response(body).unwrap(),
            ("Answer: Yes".to_string(), FinishReason::Stop)
        );
    }

    #[test]
    fn length_finish_is_a_budget_error() {
        let body = r#"{"choices":[{"message":{"content":"partial"},"finish_reason":"length"}]}"#;
        assert!(matches!(
            parse_chat_response(body),
            Err(GatewayError::Budget { partial_len: 7, .. })
        ));
    }

    #[test]
    fn malformed_bodies_are_protocol_errors() {
        for body in ["not json", "{}", r#"{"choices":[]}"#, r#"{"choices":[{"message":{}}]}"#] {
            assert!(matches!(parse_chat_response(body), Err(GatewayError::Protocol(_))), "{body}");
        }
        let empty = r#"{"choices":[{"message":{"content":""},"finish_reason":"stop"}]}"#;
        assert!(matches!(parse_chat_response(empty), Err(GatewayError::Protocol(_))));
    }

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<usize> = (0..50).collect();
        let out = bounded_map(&items, NonZeroUsize::new(4).unwrap(), |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_requests_before_sending() {
        let client = LlmClient::new(Duration::from_millis(50), RetryPolicy::none());
        let cfg = DecodingConfig::greedy("m", "http://127.0.0.1:9");
        assert!(matches!(
            client.complete("  ", &cfg),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut bad = cfg.clone();
        bad.temperature = -1.0;
        assert!(matches!(
            client.complete("hi", &bad),
            Err(GatewayError::InvalidRequest(_))
        ));
    }
}
