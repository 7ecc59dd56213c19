use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;
use serde_json::Value;

use super::{GenerationParams, LlmClient, LlmError};

/// Client for an OpenAI-style `POST {base_url}/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: Client,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl HttpLlm {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self::with_timeout(base_url, model, api_key, Duration::from_secs(120))
    }

    pub fn with_timeout(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .expect("HTTP client builds with static settings");
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            model: model.into(),
            api_key,
            client,
        }
    }

    /// Reads the API key from the environment variable `var`, if set.
    pub fn from_env(base_url: impl Into<String>, model: impl Into<String>, var: &str) -> Self {
        Self::new(base_url, model, std::env::var(var).ok())
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_new_tokens,
            stop: &params.stop_sequences,
            seed: params.seed,
        };
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transient(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let text = resp.text().unwrap_or_default();
            return Err(classify_status(status, retry_after, text));
        }
        let json: Value = resp
            .json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        json.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
    }

    fn model(&self) -> &str {
        &self.model
    }
}

pub(crate) fn classify_status(status: StatusCode, retry_after: Option<Duration>, body: String) -> LlmError {
    match status.as_u16() {
        429 => LlmError::RateLimited { retry_after },
        401 | 403 => LlmError::Auth(body),
        408 | 500..=599 => LlmError::Transient(format!("status {status}: {body}")),
        code => LlmError::Rejected { status: code, body },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert!(matches!(
            classify_status(StatusCode::TOO_MANY_REQUESTS, None, String::new()),
            LlmError::RateLimited { .. }
        ));
        assert!(matches!(classify_status(StatusCode::UNAUTHORIZED, None, String::new()), LlmError::Auth(_)));
        assert!(classify_status(StatusCode::BAD_GATEWAY, None, String::new()).is_retryable());
        assert!(!classify_status(StatusCode::BAD_REQUEST, None, String::new()).is_retryable());
    }

    #[test]
    fn request_body_shape() {
        let params = GenerationParams::default();
        let body = ChatRequest {
            model: "m",
            messages: [Message {
                role: "user",
                content: "hi",
            }],
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_new_tokens,
            stop: &params.stop_sequences,
            seed: None,
        };
        let v = serde_json::to_value(&body).unwrap();
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["max_tokens"], 512);
        assert_eq!(v["stop"][0], "\n\n\n");
        assert!(v.get("seed").is_none());
    }
}
