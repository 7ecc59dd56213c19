//! Label preservation: how often an oracle classifier assigns a synthetic
//! example to the class it was generated for.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::http::classify_status;
use crate::llm::{LlmError, RetryPolicy};
use crate::synthesis::SyntheticExample;

/// Anything that maps texts to labels, one per text, in order.
pub trait Classifier: Send + Sync {
    fn classify(&self, texts: &[String]) -> Result<Vec<String>>;
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct ClassifyResponse {
    labels: Vec<String>,
}

/// Client for `POST {base_url}/classify` taking `{"texts": [...]}` and
/// answering `{"labels": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpClassifier {
    base_url: String,
    client: Client,
    batch_size: usize,
    retry: RetryPolicy,
}

impl HttpClassifier {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            client: Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("HTTP client builds with static settings"),
            batch_size: 64,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn post(&self, texts: &[String]) -> std::result::Result<Vec<String>, LlmError> {
        let resp = self
            .client
            .post(format!("{}/classify", self.base_url))
            .json(&ClassifyRequest { texts })
            .send()
            .map_err(|e| LlmError::Transient(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(classify_status(status, None, body));
        }
        let parsed: ClassifyResponse = resp
            .json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        if parsed.labels.len() != texts.len() {
            return Err(LlmError::MalformedResponse(format!(
                "sent {} texts, got {} labels",
                texts.len(),
                parsed.labels.len()
            )));
        }
        Ok(parsed.labels)
    }

    fn post_with_retry(&self, texts: &[String]) -> Result<Vec<String>> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post(texts) {
                Ok(labels) => return Ok(labels),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    thread::sleep(self.retry.backoff(attempt - 1));
                }
                Err(e) => return Err(Error::Oracle(format!("after {attempt} attempts: {e}"))),
            }
        }
    }
}

impl Classifier for HttpClassifier {
    fn classify(&self, texts: &[String]) -> Result<Vec<String>> {
        let mut labels = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            labels.extend(self.post_with_retry(chunk)?);
        }
        Ok(labels)
    }
}

/// Fraction of examples whose oracle label equals the prompted label. Any
/// oracle failure discards the whole evaluation.
pub fn label_preservation(dataset: &[SyntheticExample], oracle: &dyn Classifier) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Invalid("label preservation needs a non-empty dataset".into()));
    }
    let texts: Vec<String> = dataset.iter().map(|e| e.text.clone()).collect();
    let predicted = oracle.classify(&texts)?;
    if predicted.len() != dataset.len() {
        return Err(Error::Oracle(format!(
            "expected {} labels, got {}",
            dataset.len(),
            predicted.len()
        )));
    }
    let agree = dataset.iter().zip(&predicted).filter(|(e, p)| e.label == **p).count();
    Ok(agree as f64 / dataset.len() as f64)
}
