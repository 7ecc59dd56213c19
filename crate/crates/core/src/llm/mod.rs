//! Teacher-model access: the client contract, a deterministic mock, the
//! chat-completions HTTP client, retries, rate limiting and response caching.

mod cache;
pub(crate) mod http;
mod limiter;
mod mock;
mod retry;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use http::HttpLlm;
pub use limiter::{Clock, ManualClock, Permit, SystemClock, Throttle, Throttled};
pub use mock::{MockLlm, MockStyle};
pub use retry::{complete_with_policy, postprocess, Completion, RetryPolicy};

/// Sampling parameters sent with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub top_p: f64,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub stop_sequences: Vec<String>,
    /// Per-request sampling seed. Distinguishes repeated draws of one prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            top_p: 0.9,
            temperature: 1.0,
            max_new_tokens: 512,
            stop_sequences: vec!["\n\n\n".to_owned()],
            seed: None,
        }
    }
}

impl GenerationParams {
    /// Settings used when bootstrapping a seed set with few-shot generation.
    pub fn bootstrap() -> Self {
        Self {
            temperature: 0.95,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("response cache: {0}")]
    Cache(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::RateLimited { .. } | LlmError::Transient(_))
    }

    /// Short machine-readable category, used in failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            LlmError::RateLimited { .. } => "rate_limit",
            LlmError::Auth(_) => "auth",
            LlmError::MalformedResponse(_) => "malformed_response",
            LlmError::Transient(_) => "transient",
            LlmError::Rejected { .. } => "rejected",
            LlmError::Cache(_) => "cache",
            LlmError::Exhausted { last, .. } => last.kind(),
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            LlmError::Exhausted { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

/// A text-completion backend.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError>;

    /// Model identifier; part of the response cache key.
    fn model(&self) -> &str;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        (**self).complete(prompt, params)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        (**self).complete(prompt, params)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = GenerationParams::default();
        assert_eq!(p.top_p, 0.9);
        assert_eq!(p.temperature, 1.0);
        assert_eq!(p.max_new_tokens, 512);
        assert!(p.validate().is_ok());
        assert_eq!(GenerationParams::bootstrap().temperature, 0.95);
    }

    #[test]
    fn invalid_params() {
        let bad = GenerationParams {
            top_p: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GenerationParams {
            temperature: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exhausted_reports_underlying_kind() {
        let e = LlmError::Exhausted {
            attempts: 5,
            last: Box::new(LlmError::RateLimited { retry_after: None }),
        };
        assert_eq!(e.kind(), "rate_limit");
        assert_eq!(e.attempts(), 5);
    }
}
