//! Model gateway: chat requests, retries, structured-output extraction, and
//! the content-addressed call cache.
//!
//! Backends are pluggable behind [`Backend`]: [`http::HttpBackend`] speaks
//! the chat-completion JSON wire format, [`mock::MockBackend`] replays a
//! deterministic script. The [`Gateway`] wraps a backend with bounded
//! exponential-backoff retries, a [`store::RunStore`] cache consulted before
//! every dispatch, a transcript, and JSON repair rounds for structured calls.
//!
//! Prompt text may embed image attachments as `<<IMAGE:ref>>` markers; the
//! gateway expands them into typed image parts (base64 data URIs for local
//! files, pass-through for URLs) before the cache key is computed, so a
//! changed screenshot is a different call.

pub mod http;
pub mod mock;
pub mod store;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schemas;
use store::{RunStore, TranscriptEntry, TranscriptOutcome};

pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_REPAIR_ROUNDS: u32 = 2;

/// Errors from the gateway and its backends.
#[derive(Debug, Error)]
pub enum GatewayError {
    /// Network-level failure (connect, timeout, 5xx). Retryable.
    #[error("transport error: {0}")]
    Transport(String),
    /// Backend asked us to slow down (429). Retryable.
    #[error("rate limited: {0}")]
    RateLimited(String),
    /// Backend rejected the request outright (other 4xx, bad auth). Final.
    #[error("backend refused request: {0}")]
    BackendRefused(String),
    /// The completion hit the token limit before finishing. Final.
    #[error("response truncated by max_tokens")]
    Truncated,
    /// An `<<IMAGE:...>>` ref did not resolve to a readable file.
    #[error("unresolvable attachment: {0}")]
    UnresolvableAttachment(String),
    /// Model output was not parseable as JSON, even after fence stripping
    /// and one bracketed-region salvage attempt. Repairable.
    #[error("unparseable model output: {0}")]
    Unparseable(String),
    /// Parsed JSON did not satisfy the named schema. Repairable.
    #[error("schema violation against {schema_id}: {detail}")]
    SchemaViolation { schema_id: String, detail: String },
    /// Structured call still invalid after all repair rounds.
    #[error("structured output failed after {rounds} repair round(s): {last}")]
    StructuredOutputFailed { rounds: u32, last: String },
    /// Programmer error: schema id not registered.
    #[error("unknown schema id: {0}")]
    UnknownSchema(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_) | GatewayError::RateLimited(_))
    }
}

// ─── Requests and responses ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One typed content part of a chat message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: Vec<ContentPart>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Message {
        Message { role: Role::User, content: vec![ContentPart::Text { text: text.into() }] }
    }

    /// Concatenated text parts (image parts skipped).
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        for part in &self.content {
            if let ContentPart::Text { text } = part {
                out.push_str(text);
            }
        }
        out
    }
}

/// A chat-completion request as the pipeline stages build it.
///
/// `request_tag` names the pipeline stage for the transcript and for mock
/// matching. `schema_id` is set on structured calls and participates in the
/// cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_id: Option<String>,
}

impl ChatRequest {
    /// Single-user-turn request, the common case for every pipeline stage.
    pub fn new(model_id: &str, request_tag: &str, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest {
            model_id: model_id.to_string(),
            messages: vec![Message::user(prompt)],
            temperature: 0.0,
            max_tokens: 8192,
            request_tag: request_tag.to_string(),
            schema_id: None,
        }
    }

    pub fn with_schema(mut self, schema_id: &str) -> ChatRequest {
        self.schema_id = Some(schema_id.to_string());
        self
    }

    pub fn text_content(&self) -> String {
        self.messages.iter().map(|m| m.text_content()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_id: String,
}

/// Raw reply from a backend, before caching.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub truncated: bool,
}

/// A completion backend. Implementations must be cheap to call concurrently.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError>;
}

// ─── Attachment markers ─────────────────────────────────────────────────────

const MARKER_OPEN: &str = "<<IMAGE:";
const MARKER_CLOSE: &str = ">>";

/// Marker embedded in prompt text where an image attachment belongs.
pub fn image_marker(reference: &str) -> String {
    format!("{MARKER_OPEN}{reference}{MARKER_CLOSE}")
}

fn mime_for(reference: &str) -> &'static str {
    let lower = reference.to_ascii_lowercase();
    if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg"
    } else if lower.ends_with(".gif") {
        "image/gif"
    } else if lower.ends_with(".webp") {
        "image/webp"
    } else {
        "image/png"
    }
}

fn resolve_image(reference: &str) -> Result<ImageUrl, GatewayError> {
    if reference.starts_with("http://") || reference.starts_with("https://") {
        return Ok(ImageUrl { url: reference.to_string() });
    }
    let bytes = std::fs::read(Path::new(reference))
        .map_err(|e| GatewayError::UnresolvableAttachment(format!("{reference}: {e}")))?;
    use base64::Engine as _;
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(ImageUrl { url: format!("data:{};base64,{encoded}", mime_for(reference)) })
}

/// Split text on `<<IMAGE:ref>>` markers into alternating text and image
/// parts, resolving each ref. Markers expand in their textual order, so
/// section builders control A-then-B ordering.
fn expand_text(text: &str) -> Result<Vec<ContentPart>, GatewayError> {
    let mut parts = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(MARKER_OPEN) {
        let after = &rest[start + MARKER_OPEN.len()..];
        let Some(end) = after.find(MARKER_CLOSE) else {
            break; // unterminated marker: leave as literal text
        };
        if start > 0 {
            parts.push(ContentPart::Text { text: rest[..start].to_string() });
        }
        let reference = &after[..end];
        parts.push(ContentPart::ImageUrl { image_url: resolve_image(reference)? });
        rest = &after[end + MARKER_CLOSE.len()..];
    }
    if !rest.is_empty() {
        parts.push(ContentPart::Text { text: rest.to_string() });
    }
    Ok(parts)
}

/// Expand every attachment marker in the request into typed image parts.
pub fn expand_request(req: &ChatRequest) -> Result<ChatRequest, GatewayError> {
    let mut out = req.clone();
    let mut messages = Vec::with_capacity(req.messages.len());
    for msg in &req.messages {
        let mut content = Vec::new();
        for part in &msg.content {
            match part {
                ContentPart::Text { text } => content.extend(expand_text(text)?),
                other => content.push(other.clone()),
            }
        }
        messages.push(Message { role: msg.role, content });
    }
    out.messages = messages;
    Ok(out)
}

// ─── Cache key ──────────────────────────────────────────────────────────────

/// Content-addressed cache key: sha256 over (model id, temperature,
/// serialized messages, schema id). Request tag deliberately excluded — the
/// same exchange is the same exchange whichever stage issues it.
pub fn cache_key(req: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model_id: &'a str,
        temperature: f64,
        messages: &'a [Message],
        schema_id: &'a Option<String>,
    }
    let material = serde_json::to_vec(&KeyMaterial {
        model_id: &req.model_id,
        temperature: req.temperature,
        messages: &req.messages,
        schema_id: &req.schema_id,
    })
    .expect("key material serializes");
    hex::encode(Sha256::digest(&material))
}

// ─── Structured extraction ──────────────────────────────────────────────────

fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(body) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // Drop the info string ("json", …) up to the first newline.
    let body = match body.find('\n') {
        Some(idx) => &body[idx + 1..],
        None => body,
    };
    body.strip_suffix("```").unwrap_or(body).trim()
}

fn salvage_braced_region(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

/// Parse and validate one model reply against a registered schema.
///
/// Strips markdown fences; if the whole body does not parse, makes one
/// salvage attempt on the outermost braced region. Parse and schema failures
/// are distinct, repairable errors.
pub fn extract_json(raw: &str, schema_id: &str) -> Result<serde_json::Value, GatewayError> {
    if !schemas::is_known(schema_id) {
        return Err(GatewayError::UnknownSchema(schema_id.to_string()));
    }
    let stripped = strip_fences(raw);
    let value = match serde_json::from_str::<serde_json::Value>(stripped) {
        Ok(v) => v,
        Err(first_err) => {
            let salvaged = salvage_braced_region(stripped)
                .and_then(|region| serde_json::from_str::<serde_json::Value>(region).ok());
            match salvaged {
                Some(v) => v,
                None => return Err(GatewayError::Unparseable(first_err.to_string())),
            }
        }
    };
    schemas::validate(schema_id, &value).map_err(|detail| GatewayError::SchemaViolation {
        schema_id: schema_id.to_string(),
        detail,
    })?;
    Ok(value)
}

// ─── Gateway ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Sampling temperature stamped on every request (cache keys see the
    /// stamped value).
    pub temperature: f64,
    /// Retries after the first attempt for retryable failures.
    pub max_retries: u32,
    /// Repair re-prompts after the first structured attempt.
    pub repair_rounds: u32,
    /// Base backoff; doubles per retry. Zero in tests.
    pub backoff_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            temperature: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
            repair_rounds: DEFAULT_REPAIR_ROUNDS,
            backoff_ms: 500,
        }
    }
}

/// Outcome of a structured call: the validated value plus call accounting.
#[derive(Debug, Clone)]
pub struct StructuredResult {
    pub value: serde_json::Value,
    pub response: ChatResponse,
    /// Exchanges used, including repair rounds (cache hits count).
    pub model_calls: u32,
}

/// Backend wrapper with retries, caching, transcript, and repair rounds.
/// Cheap to clone; clones share the store and counters.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    store: Arc<RunStore>,
    cfg: GatewayConfig,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, store: Arc<RunStore>, cfg: GatewayConfig) -> Gateway {
        Gateway { backend, store, cfg }
    }

    /// In-memory gateway over a backend, for tests and one-shot runs.
    pub fn ephemeral(backend: Arc<dyn Backend>, cfg: GatewayConfig) -> Gateway {
        Gateway::new(backend, Arc::new(RunStore::in_memory()), cfg)
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    /// One chat exchange: cache lookup, then dispatch with bounded
    /// exponential-backoff retries on transport/rate-limit failures.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut req = expand_request(req)?;
        req.temperature = self.cfg.temperature;
        let key = cache_key(&req);
        let prompt_chars = req.text_content().len();

        if let Some(resp) = self.store.get(&key) {
            self.store.record(TranscriptEntry {
                seq: 0,
                request_tag: req.request_tag.clone(),
                model_id: req.model_id.clone(),
                cache_key: key,
                cache_hit: true,
                retries: 0,
                outcome: TranscriptOutcome::Ok,
                error: None,
                prompt_chars,
                response_chars: resp.text.len(),
            });
            return Ok(resp);
        }

        let mut retries = 0u32;
        loop {
            match self.backend.complete(&req) {
                Ok(reply) if reply.truncated => {
                    self.record_failure(&req, &key, retries, prompt_chars, "truncated");
                    return Err(GatewayError::Truncated);
                }
                Ok(reply) => {
                    let resp = ChatResponse {
                        text: reply.text,
                        prompt_tokens: reply.prompt_tokens,
                        completion_tokens: reply.completion_tokens,
                        backend_id: self.backend.id(),
                    };
                    self.store.put(&key, &resp);
                    self.store.record(TranscriptEntry {
                        seq: 0,
                        request_tag: req.request_tag.clone(),
                        model_id: req.model_id.clone(),
                        cache_key: key,
                        cache_hit: false,
                        retries,
                        outcome: TranscriptOutcome::Ok,
                        error: None,
                        prompt_chars,
                        response_chars: resp.text.len(),
                    });
                    return Ok(resp);
                }
                Err(e) if e.retryable() && retries < self.cfg.max_retries => {
                    let backoff = self.cfg.backoff_ms.saturating_mul(1 << retries);
                    if backoff > 0 {
                        std::thread::sleep(std::time::Duration::from_millis(backoff));
                    }
                    retries += 1;
                }
                Err(e) => {
                    self.record_failure(&req, &key, retries, prompt_chars, &e.to_string());
                    return Err(e);
                }
            }
        }
    }

    fn record_failure(
        &self,
        req: &ChatRequest,
        key: &str,
        retries: u32,
        prompt_chars: usize,
        error: &str,
    ) {
        self.store.record(TranscriptEntry {
            seq: 0,
            request_tag: req.request_tag.clone(),
            model_id: req.model_id.clone(),
            cache_key: key.to_string(),
            cache_hit: false,
            retries,
            outcome: TranscriptOutcome::Error,
            error: Some(error.to_string()),
            prompt_chars,
            response_chars: 0,
        });
    }

    /// Structured call: complete, extract+validate JSON, and on parse or
    /// schema failure re-prompt with the original request plus the error
    /// appended, up to `repair_rounds` times.
    pub fn complete_structured(&self, req: &ChatRequest) -> Result<StructuredResult, GatewayError> {
        let schema_id = req
            .schema_id
            .clone()
            .ok_or_else(|| GatewayError::UnknownSchema("<request carries no schema_id>".into()))?;
        let mut current = req.clone();
        let mut calls = 0u32;
        let mut last: Option<GatewayError> = None;
        for round in 0..=self.cfg.repair_rounds {
            let resp = self.complete(&current)?;
            calls += 1;
            match extract_json(&resp.text, &schema_id) {
                Ok(value) => {
                    return Ok(StructuredResult { value, response: resp, model_calls: calls })
                }
                Err(e @ (GatewayError::Unparseable(_) | GatewayError::SchemaViolation { .. })) => {
                    if round < self.cfg.repair_rounds {
                        // Chain from `current`, not the original: each round
                        // sees the full repair history (and stays a distinct
                        // request even when the backend repeats itself).
                        current = repair_request(&current, &resp.text, &e);
                    }
                    last = Some(e);
                }
                Err(other) => return Err(other),
            }
        }
        Err(GatewayError::StructuredOutputFailed {
            rounds: self.cfg.repair_rounds,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

/// The repair prompt: original messages plus a user turn quoting the bad
/// reply and the extraction error.
fn repair_request(original: &ChatRequest, bad_reply: &str, err: &GatewayError) -> ChatRequest {
    let mut req = original.clone();
    req.messages.push(Message::user(format!(
        "Your previous reply could not be processed: {err}\n\n\
         Your previous reply was:\n{bad_reply}\n\n\
         Respond to the original request again, returning ONLY valid JSON \
         matching the required schema. No additional text."
    )));
    req
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::mock::{MockBackend, MockReply, MockScript};
    use super::*;

    fn gw(script: MockScript) -> Gateway {
        let cfg = GatewayConfig { backoff_ms: 0, ..GatewayConfig::default() };
        Gateway::ephemeral(Arc::new(MockBackend::new(script)), cfg)
    }

    // ─── extract_json ───────────────────────────────────────────────────

    #[test]
    fn test_extract_json_plain_object() {
        let v = extract_json(r#"{"Overall":{"winner":"A","reasoning":"x"}}"#, "final_judge")
            .unwrap();
        assert_eq!(v["Overall"]["winner"], "A");
    }

    #[test]
    fn test_extract_json_strips_markdown_fences() {
        let raw = "```json\n{\"Overall\":{\"winner\":\"B\",\"reasoning\":\"y\"}}\n```";
        let v = extract_json(raw, "final_judge").unwrap();
        assert_eq!(v["Overall"]["winner"], "B");
    }

    #[test]
    fn test_extract_json_salvages_braced_region() {
        let raw = "Sure! Here is the result:\n{\"Overall\":{\"winner\":\"Tie\",\"reasoning\":\"z\"}}\nHope that helps.";
        let v = extract_json(raw, "final_judge").unwrap();
        assert_eq!(v["Overall"]["winner"], "Tie");
    }

    #[test]
    fn test_extract_json_unparseable() {
        let err = extract_json("not json at all", "final_judge").unwrap_err();
        assert!(matches!(err, GatewayError::Unparseable(_)), "{err}");
    }

    #[test]
    fn test_extract_json_schema_violation() {
        let err = extract_json(r#"{"Overall":{"winner":"C","reasoning":"x"}}"#, "final_judge")
            .unwrap_err();
        assert!(matches!(err, GatewayError::SchemaViolation { .. }), "{err}");
    }

    #[test]
    fn test_extract_json_unknown_schema() {
        let err = extract_json("{}", "nope").unwrap_err();
        assert!(matches!(err, GatewayError::UnknownSchema(_)));
    }

    // ─── cache + retries ────────────────────────────────────────────────

    #[test]
    fn test_identical_request_served_from_cache() {
        let gw = gw(MockScript::with_default("hello"));
        let req = ChatRequest::new("m1", "final_judge", "prompt");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert_eq!(first, second);
        let c = gw.store().counters();
        assert_eq!(c.network_calls, 1);
        assert_eq!(c.cache_hits, 1);
    }

    #[test]
    fn test_configured_temperature_distinguishes_cache_entries() {
        // The gateway stamps its configured temperature on every request, so
        // two gateways at different temperatures never share cache entries
        // even over the same store.
        let store = Arc::new(RunStore::in_memory());
        let backend = Arc::new(MockBackend::new(MockScript::with_default("hello")));
        let cold = Gateway::new(
            backend.clone(),
            store.clone(),
            GatewayConfig { backoff_ms: 0, ..GatewayConfig::default() },
        );
        let warm = Gateway::new(
            backend,
            store.clone(),
            GatewayConfig { temperature: 0.7, backoff_ms: 0, ..GatewayConfig::default() },
        );
        let req = ChatRequest::new("m1", "t", "prompt");
        cold.complete(&req).unwrap();
        warm.complete(&req).unwrap();
        assert_eq!(store.counters().network_calls, 2);
        cold.complete(&req).unwrap();
        assert_eq!(store.counters().cache_hits, 1, "same temperature does hit the cache");
    }

    #[test]
    fn test_rate_limited_then_success_records_one_retry() {
        let script = MockScript::new().rule_seq(
            None,
            None,
            vec![MockReply::RateLimited, MockReply::text("ok")],
        );
        let gw = gw(script);
        let resp = gw.complete(&ChatRequest::new("m", "t", "p")).unwrap();
        assert_eq!(resp.text, "ok");
        let t = gw.store().transcript();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].retries, 1);
        assert_eq!(gw.store().counters().network_calls, 1);
    }

    #[test]
    fn test_retries_exhausted_surfaces_transport_error() {
        let script = MockScript::new().rule_seq(None, None, vec![MockReply::TransportError]);
        let gw = gw(script);
        let err = gw.complete(&ChatRequest::new("m", "t", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::Transport(_)));
        let c = gw.store().counters();
        assert_eq!(c.failed_calls, 1);
        let t = gw.store().transcript();
        assert_eq!(t[0].retries, DEFAULT_MAX_RETRIES);
    }

    #[test]
    fn test_refused_is_not_retried() {
        let script = MockScript::new().rule_seq(None, None, vec![MockReply::Refused]);
        let gw = gw(script);
        let err = gw.complete(&ChatRequest::new("m", "t", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::BackendRefused(_)));
        assert_eq!(gw.store().transcript()[0].retries, 0);
    }

    #[test]
    fn test_truncated_reply_is_an_error_and_not_cached() {
        let script = MockScript::new().rule_seq(None, None, vec![MockReply::Truncated]);
        let gw = gw(script);
        let err = gw.complete(&ChatRequest::new("m", "t", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::Truncated));
        assert_eq!(gw.store().counters().cache_hits, 0);
    }

    #[test]
    fn test_network_calls_equal_transcript_minus_cache_hits() {
        let gw = gw(MockScript::with_default("x"));
        for i in 0..5 {
            let req = ChatRequest::new("m", "t", format!("p{}", i % 2));
            let _ = gw.complete(&req);
        }
        let c = gw.store().counters();
        let t = gw.store().transcript();
        assert_eq!(c.network_calls, t.len() as u64 - c.cache_hits);
    }

    // ─── structured calls ───────────────────────────────────────────────

    #[test]
    fn test_structured_invalid_then_valid_uses_two_calls() {
        let script = MockScript::new().rule_seq(
            None,
            None,
            vec![
                MockReply::text("definitely not json"),
                MockReply::text(r#"{"Overall":{"winner":"A","reasoning":"fixed"}}"#),
            ],
        );
        let gw = gw(script);
        let req = ChatRequest::new("m", "t", "p").with_schema("final_judge");
        let out = gw.complete_structured(&req).unwrap();
        assert_eq!(out.model_calls, 2);
        assert_eq!(out.value["Overall"]["winner"], "A");
        assert_eq!(gw.store().counters().network_calls, 2);
    }

    #[test]
    fn test_structured_fails_after_repair_rounds() {
        let script = MockScript::with_default("garbage");
        let gw = gw(script);
        let req = ChatRequest::new("m", "t", "p").with_schema("final_judge");
        let err = gw.complete_structured(&req).unwrap_err();
        assert!(matches!(err, GatewayError::StructuredOutputFailed { .. }));
        // initial + DEFAULT_REPAIR_ROUNDS repairs
        assert_eq!(
            gw.store().counters().network_calls,
            1 + DEFAULT_REPAIR_ROUNDS as u64
        );
    }

    #[test]
    fn test_structured_requires_schema_id() {
        let gw = gw(MockScript::with_default("{}"));
        let err = gw.complete_structured(&ChatRequest::new("m", "t", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::UnknownSchema(_)));
    }

    #[test]
    fn test_structured_replay_is_deterministic_from_cache() {
        let script = MockScript::new().rule_seq(
            None,
            None,
            vec![
                MockReply::text("bad"),
                MockReply::text(r#"{"Overall":{"winner":"B","reasoning":"r"}}"#),
            ],
        );
        let dir = tempfile::tempdir().unwrap();
        let cfg = GatewayConfig { backoff_ms: 0, ..GatewayConfig::default() };
        let req = ChatRequest::new("m", "t", "p").with_schema("final_judge");

        let first = {
            let store = Arc::new(RunStore::open(dir.path()).unwrap());
            let gw = Gateway::new(Arc::new(MockBackend::new(script.clone())), store, cfg.clone());
            gw.complete_structured(&req).unwrap().value
        };
        // Fresh process, same run dir: replay must not touch the backend.
        let store = Arc::new(RunStore::open(dir.path()).unwrap());
        let gw = Gateway::new(Arc::new(MockBackend::new(MockScript::new())), store, cfg);
        let second = gw.complete_structured(&req).unwrap();
        assert_eq!(second.value, first);
        assert_eq!(gw.store().counters().network_calls, 0);
        assert_eq!(gw.store().counters().cache_hits, 2);
    }

    // ─── attachments ────────────────────────────────────────────────────

    #[test]
    fn test_image_markers_expand_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        std::fs::write(&a, [0x89, b'P', b'N', b'G']).unwrap();
        std::fs::write(&b, [0x89, b'P', b'N', b'G']).unwrap();
        let prompt = format!(
            "answer A{}\nanswer B{}",
            image_marker(a.to_str().unwrap()),
            image_marker(b.to_str().unwrap())
        );
        let req = ChatRequest::new("m", "t", prompt);
        let expanded = expand_request(&req).unwrap();
        let parts = &expanded.messages[0].content;
        let images: Vec<&ContentPart> =
            parts.iter().filter(|p| matches!(p, ContentPart::ImageUrl { .. })).collect();
        assert_eq!(images.len(), 2);
        // Text order preserved: A's text precedes the first image.
        assert!(matches!(&parts[0], ContentPart::Text { text } if text.contains("answer A")));
        assert!(matches!(&parts[1], ContentPart::ImageUrl { image_url }
            if image_url.url.starts_with("data:image/png;base64,")));
    }

    #[test]
    fn test_unresolvable_attachment_is_an_error() {
        let req = ChatRequest::new("m", "t", image_marker("/definitely/missing.png"));
        let err = expand_request(&req).unwrap_err();
        assert!(matches!(err, GatewayError::UnresolvableAttachment(_)));
    }

    #[test]
    fn test_url_attachments_pass_through() {
        let req = ChatRequest::new("m", "t", image_marker("https://example.org/s.png"));
        let expanded = expand_request(&req).unwrap();
        assert!(matches!(&expanded.messages[0].content[0],
            ContentPart::ImageUrl { image_url } if image_url.url == "https://example.org/s.png"));
    }

    #[test]
    fn test_cache_key_changes_with_schema_id() {
        let req = ChatRequest::new("m", "t", "p");
        let with = req.clone().with_schema("final_judge");
        assert_ne!(cache_key(&req), cache_key(&with));
    }
}
