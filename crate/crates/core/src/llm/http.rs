//! OpenAI-compatible chat-completion backend.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse};
use crate::config::LlmBackendConfig;

pub struct HttpBackend {
    id: String,
    url: String,
    model: String,
    temperature: f32,
    api_key: Option<String>,
    client: Client,
}

impl HttpBackend {
    /// Reads the bearer token from the configured environment variable; the
    /// header is omitted when the variable is unset (local servers).
    pub fn from_config(config: &LlmBackendConfig) -> Result<Self, LlmError> {
        let id = format!("openai:{}", config.model);
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Refused {
                backend_id: id.clone(),
                message: e.to_string(),
            })?;
        Ok(HttpBackend {
            id,
            url: config.url.clone(),
            model: config.model.clone(),
            temperature: config.temperature,
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            client,
        })
    }

    fn messages(request: &LlmRequest) -> Vec<Value> {
        let mut messages = Vec::new();
        for example in &request.prompt.examples {
            messages.push(json!({"role": "user", "content": example.input}));
            messages.push(json!({"role": "assistant", "content": example.output}));
        }
        messages.push(json!({"role": "user", "content": request.payload()}));
        messages
    }

    fn transport(&self, message: impl Into<String>) -> LlmError {
        LlmError::Transport {
            backend_id: self.id.clone(),
            message: message.into(),
        }
    }
}

impl LlmBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": Self::messages(request),
        });
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| self.transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| self.transport(e.to_string()))?;
        if !status.is_success() {
            let retriable = status.is_server_error()
                || status == StatusCode::TOO_MANY_REQUESTS
                || status == StatusCode::REQUEST_TIMEOUT;
            let message = format!("HTTP {status}: {text}");
            return Err(if retriable {
                self.transport(message)
            } else {
                LlmError::Refused {
                    backend_id: self.id.clone(),
                    message,
                }
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| self.transport(format!("bad response body: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| self.transport("response has no choices[0].message.content"))?;
        Ok(LlmResponse {
            raw_text: content.to_string(),
            backend_id: self.id.clone(),
        })
    }
}
