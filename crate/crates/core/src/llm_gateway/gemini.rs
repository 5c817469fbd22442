//! Live backend speaking the Gemini `generateContent` REST API.

use std::sync::Arc;

use serde_json::{json, Value};

use super::{CallError, CompletionBackend, PromptRequest, Stage};
use crate::net::{HttpRequest, HttpTransport, TransportError};

pub const DEFAULT_BASE_URL: &str = "https://generativelanguage.googleapis.com/v1beta";

pub struct GeminiBackend {
    base_url: String,
    api_key: String,
    /// Model per stage, index 0 = stage 1.
    models: [String; 5],
    transport: Arc<dyn HttpTransport>,
}

impl GeminiBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        models: [String; 5],
        transport: Arc<dyn HttpTransport>,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            models,
            transport,
        }
    }

    fn model(&self, stage: Stage) -> &str {
        &self.models[stage.number() as usize - 1]
    }

    fn request_body(req: &PromptRequest) -> Value {
        json!({
            "systemInstruction": {"parts": [{"text": req.system_text}]},
            "contents": [{"role": "user", "parts": [{"text": req.user_text}]}],
            "generationConfig": {
                "temperature": req.decode_params.temperature,
                "maxOutputTokens": req.decode_params.max_output_tokens,
                "responseMimeType": "application/json",
            },
        })
    }
}

impl CompletionBackend for GeminiBackend {
    fn backend_id(&self, stage: Stage) -> String {
        format!("gemini:{}", self.model(stage))
    }

    fn call(&self, req: &PromptRequest) -> Result<String, CallError> {
        let url = format!(
            "{}/models/{}:generateContent",
            self.base_url.trim_end_matches('/'),
            self.model(req.stage)
        );
        let http = HttpRequest::post_json(url, Self::request_body(req))
            .header("x-goog-api-key", &self.api_key);
        let response = self.transport.send(http).map_err(|e| match e {
            TransportError::Timeout => CallError::Timeout,
            TransportError::Other(m) => CallError::Transport(m),
        })?;
        if !response.is_success() {
            return Err(CallError::Status {
                code: response.status,
                retry_after: response.retry_after(),
                message: String::from_utf8_lossy(&response.body)
                    .chars()
                    .take(500)
                    .collect(),
            });
        }
        let body: Value = serde_json::from_slice(&response.body)
            .map_err(|e| CallError::Malformed(e.to_string()))?;
        extract_text(&body)
    }
}

/// Concatenates the text parts of the first candidate, skipping thought parts.
fn extract_text(body: &Value) -> Result<String, CallError> {
    let parts = body
        .pointer("/candidates/0/content/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| CallError::Malformed("no candidate content".into()))?;
    Ok(parts
        .iter()
        .filter(|p| !p.get("thought").and_then(Value::as_bool).unwrap_or(false))
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect())
}
