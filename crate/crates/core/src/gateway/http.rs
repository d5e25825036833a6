//! Chat-completion HTTP backend.
//!
//! Speaks the common `/chat/completions` JSON wire format: messages carry
//! typed content parts (text and image_url with data URIs), replies carry
//! `choices[0].message.content` plus usage. The API key comes from an
//! environment variable — never from config files.

use serde_json::{json, Value};

use super::{Backend, BackendReply, ChatRequest, ContentPart, GatewayError};

/// Environment variable read for the bearer token by default.
pub const DEFAULT_API_KEY_ENV: &str = "CRITJUDGE_API_KEY";

pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// `endpoint` is the full chat-completions URL. `api_key_env` names the
    /// environment variable holding the bearer token; an unset variable means
    /// unauthenticated requests (local inference servers).
    pub fn new(endpoint: &str, api_key_env: &str, timeout_secs: u64) -> HttpBackend {
        HttpBackend {
            endpoint: endpoint.to_string(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(timeout_secs))
                .build()
                .expect("client builds"),
        }
    }
}

/// Serialize a request into the wire body sent to the endpoint.
pub fn to_wire_body(req: &ChatRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| {
            let content: Vec<Value> = m
                .content
                .iter()
                .map(|p| match p {
                    ContentPart::Text { text } => json!({"type": "text", "text": text}),
                    ContentPart::ImageUrl { image_url } => {
                        json!({"type": "image_url", "image_url": {"url": image_url.url}})
                    }
                })
                .collect();
            json!({"role": m.role, "content": content})
        })
        .collect();
    json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

/// Pull the completion text and usage out of a wire response.
pub fn parse_wire_response(v: &Value) -> Result<BackendReply, GatewayError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Transport("response has no choices".into()))?;
    let content = choice
        .pointer("/message/content")
        .ok_or_else(|| GatewayError::Transport("choice has no message content".into()))?;
    // Content is either a plain string or an array of typed parts.
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        other => return Err(GatewayError::Transport(format!("unexpected content: {other}"))),
    };
    let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    let usage = v.get("usage");
    let token = |k: &str| usage.and_then(|u| u.get(k)).and_then(Value::as_u64).unwrap_or(0);
    Ok(BackendReply {
        text,
        prompt_tokens: token("prompt_tokens"),
        completion_tokens: token("completion_tokens"),
        truncated,
    })
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn complete(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let mut request = self.client.post(&self.endpoint).json(&to_wire_body(req));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status();
        let body: Value = match response.json() {
            Ok(v) => v,
            Err(e) if status.is_success() => {
                return Err(GatewayError::Transport(format!("bad response body: {e}")))
            }
            Err(_) => Value::Null,
        };
        if status.as_u16() == 429 {
            return Err(GatewayError::RateLimited(format!("{status}")));
        }
        if status.is_server_error() {
            return Err(GatewayError::Transport(format!("{status}: {body}")));
        }
        if !status.is_success() {
            return Err(GatewayError::BackendRefused(format!("{status}: {body}")));
        }
        parse_wire_response(&body)
    }
}

// ─── Tests ──────────────────────────────────────────────────────────────────
