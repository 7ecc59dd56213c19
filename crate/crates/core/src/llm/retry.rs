use std::thread;
use std::time::Duration;

use rand::Rng;

use super::{GenerationParams, LlmClient, LlmError, ResponseCache};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): `base * 2^attempt`,
    /// capped, then scaled into `[0.5, 1.0]` of itself when jittered.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let delay = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt))
            .min(self.max_delay);
        if self.jitter {
            delay.mul_f64(rand::thread_rng().gen_range(0.5..=1.0))
        } else {
            delay
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Requests sent to the backend; 0 for a cache hit.
    pub attempts: u32,
    pub cached: bool,
}

/// Cuts at the first stop sequence and trims surrounding whitespace.
pub fn postprocess(raw: &str, stop_sequences: &[String]) -> String {
    let cut = stop_sequences
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| raw.find(s.as_str()))
        .min()
        .unwrap_or(raw.len());
    raw[..cut].trim().to_owned()
}

/// Completes `prompt`, consulting `cache` first and retrying transient
/// failures with exponential backoff. The cached value is the raw completion;
/// the returned text is post-processed.
pub fn complete_with_policy(
    llm: &dyn LlmClient,
    cache: Option<&ResponseCache>,
    prompt: &str,
    params: &GenerationParams,
    policy: &RetryPolicy,
) -> Result<Completion, LlmError> {
    assert!(!prompt.is_empty(), "prompt must be non-empty");
    let mut attempts = 0u32;
    let mut call = || -> Result<String, LlmError> {
        loop {
            attempts += 1;
            match llm.complete(prompt, params) {
                Ok(text) => return Ok(text),
                Err(err) if err.is_retryable() && attempts < policy.max_attempts => {
                    let mut wait = policy.backoff(attempts - 1);
                    if let LlmError::RateLimited {
                        retry_after: Some(after),
                    } = &err
                    {
                        wait = wait.max(*after);
                    }
                    log::debug!("attempt {attempts} failed ({err}); retrying in {wait:?}");
                    thread::sleep(wait);
                }
                Err(err) if err.is_retryable() => {
                    return Err(LlmError::Exhausted {
                        attempts,
                        last: Box::new(err),
                    })
                }
                Err(err) => return Err(err),
            }
        }
    };
    let (raw, cached) = match cache {
        Some(cache) => cache.lookup_or_complete(llm.model(), prompt, params, call)?,
        None => (call()?, false),
    };
    Ok(Completion {
        text: postprocess(&raw, &params.stop_sequences),
        attempts,
        cached,
    })
}
