//! Chat-completion endpoint port.
//!
//! Every model the pipeline talks to (sampler, judge, rewriter, summarizer)
//! sits behind [`PolicyEndpoint`]. Implementations are stateless between
//! calls; all loop state travels in the message list.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

/// What an endpoint is used for. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointRole {
    Sampler,
    Judge,
    Rewriter,
    Summarizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    /// 0 disables top-k filtering.
    pub top_k: u32,
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `Some(false)` asks hybrid-reasoning models to skip their thinking mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enable_thinking: Option<bool>,
}

impl DecodingParams {
    /// Greedy decoding used for evaluation.
    pub fn evaluation() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            top_k: 0,
            max_new_tokens: 8192,
            min_p: None,
            seed: None,
            enable_thinking: None,
        }
    }

    /// Summarizer profile: temperature 0.7, top-p 0.8, top-k 20, min-p 0,
    /// 8192 new tokens, thinking disabled.
    pub fn summarizer() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.8,
            top_k: 20,
            max_new_tokens: 8192,
            min_p: Some(0.0),
            seed: None,
            enable_thinking: Some(false),
        }
    }

    /// Default profile for candidate sampling. Same numbers as the summarizer
    /// profile, with the model's thinking mode left alone.
    pub fn sampling() -> Self {
        Self {
            enable_thinking: None,
            min_p: None,
            ..Self::summarizer()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("endpoint misconfigured: {0}")]
    Config(String),
}

impl EndpointError {
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Timeout | EndpointError::Transport(_) => true,
            EndpointError::Status { code, .. } => *code == 429 || *code >= 500,
            EndpointError::InvalidResponse(_) | EndpointError::Config(_) => false,
        }
    }
}

pub trait PolicyEndpoint: Send + Sync {
    fn generate(
        &self,
        messages: &[ChatMessage],
        decoding: &DecodingParams,
    ) -> Result<String, EndpointError>;

    fn model_id(&self) -> &str {
        "unknown"
    }
}

impl<T: PolicyEndpoint + ?Sized> PolicyEndpoint for &T {
    fn generate(
        &self,
        messages: &[ChatMessage],
        decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        (**self).generate(messages, decoding)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<T: PolicyEndpoint + ?Sized> PolicyEndpoint for Arc<T> {
    fn generate(
        &self,
        messages: &[ChatMessage],
        decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        (**self).generate(messages, decoding)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<T: PolicyEndpoint + ?Sized> PolicyEndpoint for Box<T> {
    fn generate(
        &self,
        messages: &[ChatMessage],
        decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        (**self).generate(messages, decoding)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Exponential backoff: `max_retries` extra attempts, each wait doubling,
/// all within `budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "secs_f64")]
    pub initial_backoff: Duration,
    #[serde(with = "secs_f64")]
    pub budget: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_secs(1),
            budget: Duration::from_secs(600),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Runs `call` until it succeeds, fails with a non-retryable error, or the
    /// retry count or time budget runs out.
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, EndpointError>,
    ) -> Result<T, EndpointError> {
        let started = Instant::now();
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() || attempt >= self.max_retries => return Err(e),
                Err(e) => {
                    if started.elapsed() + backoff > self.budget {
                        return Err(e);
                    }
                    tracing::debug!(attempt, error = %e, "retrying endpoint call");
                    thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }
}

pub(crate) mod secs_f64 {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;

    fn fast(retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries: retries,
            initial_backoff: Duration::from_millis(1),
            budget: Duration::from_secs(5),
        }
    }

    #[test]
    fn retries_transient_errors() {
        let calls = Cell::new(0);
        let out = fast(2).run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(EndpointError::Timeout)
            } else {
                Ok("ok")
            }
        });
        assert_eq!(out, Ok("ok"));
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let calls = Cell::new(0);
        let out: Result<(), _> = fast(2).run(|| {
            calls.set(calls.get() + 1);
            Err(EndpointError::Status {
                code: 503,
                body: String::new(),
            })
        });
        assert!(out.is_err());
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn does_not_retry_client_errors() {
        let calls = Cell::new(0);
        let _: Result<(), _> = fast(2).run(|| {
            calls.set(calls.get() + 1);
            Err(EndpointError::Status {
                code: 400,
                body: String::new(),
            })
        });
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn respects_budget() {
        let policy = RetryPolicy {
            max_retries: 5,
            initial_backoff: Duration::from_secs(10),
            budget: Duration::from_secs(1),
        };
        let calls = Cell::new(0);
        let _: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(EndpointError::Timeout)
        });
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn profiles() {
        let e = DecodingParams::evaluation();
        assert_eq!((e.temperature, e.max_new_tokens), (0.0, 8192));
        let s = DecodingParams::summarizer();
        assert_eq!((s.temperature, s.top_p, s.top_k), (0.7, 0.8, 20));
        assert_eq!(s.enable_thinking, Some(false));
        assert!(e.validate().is_ok());
        let bad = DecodingParams {
            top_p: 0.0,
            ..DecodingParams::evaluation()
        };
        assert!(bad.validate().is_err());
    }
}
