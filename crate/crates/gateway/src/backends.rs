//! HTTP clients for the pluggable backends. The core traits are synchronous;
//! calls run on the ambient tokio runtime when there is one (the gateway calls
//! them from `spawn_blocking`) and on a private one otherwise (CLI).

use std::future::Future;
use std::sync::OnceLock;
use std::time::Duration;

use pseudogate_core::corpus::ResponseSource;
use pseudogate_core::detector::{DetectRequest, DetectResponse, EntityBackend};
use pseudogate_core::evaluator::JudgeBackend;
use pseudogate_core::pseudonymizer::{PseudonymizeRequest, PseudonymizerBackend};
use pseudogate_core::substituter::{RestoreRequest, RestoreResponse, SubstituterBackend};
use pseudogate_core::{BackendError, EntitySpan};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::runtime::{Handle, Runtime};

use crate::config::Secret;

fn private_runtime() -> &'static Runtime {
    static RT: OnceLock<Runtime> = OnceLock::new();
    RT.get_or_init(|| {
        tokio::runtime::Builder::new_current_thread().enable_all().build().expect("tokio runtime for backend calls")
    })
}

/// Must not be called from inside an async task.
pub fn block_on<F: Future>(fut: F) -> F::Output {
    match Handle::try_current() {
        Ok(handle) => handle.block_on(fut),
        Err(_) => private_runtime().block_on(fut),
    }
}

#[derive(Debug, Clone)]
struct JsonEndpoint {
    client: reqwest::Client,
    url: String,
    timeout_ms: u64,
    token: Option<Secret>,
}

impl JsonEndpoint {
    fn new(url: impl Into<String>, timeout_ms: u64) -> Self {
        Self { client: reqwest::Client::new(), url: url.into(), timeout_ms, token: None }
    }

    async fn post_raw<B: Serialize + ?Sized>(&self, body: &B) -> Result<String, BackendError> {
        let mut req = self.client.post(&self.url).timeout(Duration::from_millis(self.timeout_ms)).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token.expose());
        }
        let resp = req.send().await.map_err(|e| self.transport(e))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| self.transport(e))?;
        if !status.is_success() {
            return Err(BackendError::Status { status: status.as_u16(), body: text });
        }
        Ok(text)
    }

    fn post_json<B: Serialize + ?Sized, R: DeserializeOwned>(&self, body: &B) -> Result<R, BackendError> {
        let text = block_on(self.post_raw(body))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))
    }

    fn transport(&self, e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout(self.timeout_ms)
        } else {
            // without the URL: it may carry credentials in userinfo
            BackendError::Unavailable(e.without_url().to_string())
        }
    }
}

/// External NER: `{"text"}` -> `{"entities": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpEntityBackend(JsonEndpoint);

impl HttpEntityBackend {
    pub fn new(url: impl Into<String>, timeout_ms: u64) -> Self {
        Self(JsonEndpoint::new(url, timeout_ms))
    }
}

impl EntityBackend for HttpEntityBackend {
    fn detect(&self, text: &str) -> Result<Vec<EntitySpan>, BackendError> {
        let resp: DetectResponse = self.0.post_json(&DetectRequest { text: text.to_string() })?;
        Ok(resp.entities)
    }
}

/// Learned pseudonymizer: `{"prompt"}` -> changed_entities / modified_prompt.
#[derive(Debug, Clone)]
pub struct HttpPseudonymizer(JsonEndpoint);

impl HttpPseudonymizer {
    pub fn new(url: impl Into<String>, timeout_ms: u64) -> Self {
        Self(JsonEndpoint::new(url, timeout_ms))
    }
}

impl PseudonymizerBackend for HttpPseudonymizer {
    fn pseudonymize(&self, request: &PseudonymizeRequest) -> Result<String, BackendError> {
        block_on(self.0.post_raw(request))
    }
}

/// Learned substituter: `{"response", "pairs"}` -> `{"restored"}`.
#[derive(Debug, Clone)]
pub struct HttpSubstituter(JsonEndpoint);

impl HttpSubstituter {
    pub fn new(url: impl Into<String>, timeout_ms: u64) -> Self {
        Self(JsonEndpoint::new(url, timeout_ms))
    }
}

impl SubstituterBackend for HttpSubstituter {
    fn restore(&self, request: &RestoreRequest) -> Result<RestoreResponse, BackendError> {
        self.0.post_json(request)
    }
}

/// Single-message chat completion against a compatible API. Used as the
/// judge and as the response source for annotation tasks.
#[derive(Debug, Clone)]
pub struct ChatClient {
    endpoint: JsonEndpoint,
    model: String,
}

impl ChatClient {
    pub fn new(base_url: &str, model: impl Into<String>, token: Option<Secret>, timeout_ms: u64) -> Self {
        let mut endpoint = JsonEndpoint::new(format!("{}/chat/completions", base_url.trim_end_matches('/')), timeout_ms);
        endpoint.token = token;
        Self { endpoint, model: model.into() }
    }

    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp: Value = self.endpoint.post_json(&body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }
}

impl JudgeBackend for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        ChatClient::complete(self, prompt)
    }
}

impl ResponseSource for ChatClient {
    fn respond(&self, prompt: &str) -> Result<String, BackendError> {
        self.complete(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let b = HttpEntityBackend::new("http://127.0.0.1:9/detect", 500);
        match b.detect("hello") {
            Err(BackendError::Unavailable(_)) | Err(BackendError::Timeout(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
