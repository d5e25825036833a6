//! Deterministic scripted backend for tests and offline runs.
//!
//! A [`MockScript`] is an ordered rule list; each rule matches on the request
//! tag and/or a prompt substring and yields canned replies. Matching is
//! deterministic: the first matching rule wins. A rule with several replies
//! consumes them in call order and then sticks at the last, which is how
//! fail-once-then-succeed scenarios are scripted.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendReply, ChatRequest, GatewayError};

/// One canned backend behavior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockReply {
    Text { body: String },
    RateLimited,
    TransportError,
    Refused,
    Truncated,
}

impl MockReply {
    pub fn text(body: impl Into<String>) -> MockReply {
        MockReply::Text { body: body.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Exact request-tag match; `None` matches any tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Substring of the concatenated prompt text; `None` matches any prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    /// Replies consumed in order; the last one repeats.
    pub responses: Vec<MockReply>,
}

impl MockRule {
    fn matches(&self, tag: &str, prompt: &str) -> bool {
        self.tag.as_deref().is_none_or(|t| t == tag)
            && self.prompt_contains.as_deref().is_none_or(|s| prompt.contains(s))
    }
}

/// Ordered mock rules plus an optional catch-all response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_response: Option<String>,
}

impl MockScript {
    pub fn new() -> MockScript {
        MockScript::default()
    }

    /// Script whose every unmatched call returns `body`.
    pub fn with_default(body: impl Into<String>) -> MockScript {
        MockScript { rules: Vec::new(), default_response: Some(body.into()) }
    }

    /// Append a single-response rule.
    pub fn rule(
        self,
        tag: Option<&str>,
        prompt_contains: Option<&str>,
        body: impl Into<String>,
    ) -> MockScript {
        self.rule_seq(tag, prompt_contains, vec![MockReply::text(body)])
    }

    /// Append a rule with an explicit reply sequence.
    pub fn rule_seq(
        mut self,
        tag: Option<&str>,
        prompt_contains: Option<&str>,
        responses: Vec<MockReply>,
    ) -> MockScript {
        self.rules.push(MockRule {
            tag: tag.map(str::to_string),
            prompt_contains: prompt_contains.map(str::to_string),
            responses,
        });
        self
    }

    pub fn from_file(path: &std::path::Path) -> std::io::Result<MockScript> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub struct MockBackend {
    script: MockScript,
    cursors: Vec<AtomicUsize>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> MockBackend {
        let cursors = script.rules.iter().map(|_| AtomicUsize::new(0)).collect();
        MockBackend { script, cursors, calls: AtomicUsize::new(0) }
    }

    /// Backend invocations observed (after gateway cache and retries).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn reply_for(&self, idx: usize) -> &MockReply {
        let rule = &self.script.rules[idx];
        let cursor = self.cursors[idx].fetch_add(1, Ordering::SeqCst);
        &rule.responses[cursor.min(rule.responses.len() - 1)]
    }
}

fn text_reply(body: &str, prompt: &str) -> BackendReply {
    BackendReply {
        text: body.to_string(),
        prompt_tokens: (prompt.len() / 4) as u64,
        completion_tokens: (body.len() / 4) as u64,
        truncated: false,
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".to_string()
    }

    fn complete(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = req.text_content();
        for (idx, rule) in self.script.rules.iter().enumerate() {
            if !rule.matches(&req.request_tag, &prompt) {
                continue;
            }
            if rule.responses.is_empty() {
                break;
            }
            return match self.reply_for(idx) {
                MockReply::Text { body } => Ok(text_reply(body, &prompt)),
                MockReply::RateLimited => Err(GatewayError::RateLimited("scripted".into())),
                MockReply::TransportError => Err(GatewayError::Transport("scripted".into())),
                MockReply::Refused => Err(GatewayError::BackendRefused("scripted".into())),
                MockReply::Truncated => Ok(BackendReply { truncated: true, ..text_reply("", &prompt) }),
            };
        }
        match &self.script.default_response {
            Some(body) => Ok(text_reply(body, &prompt)),
            None => Err(GatewayError::BackendRefused(format!(
                "no mock rule matched tag={:?} prompt_prefix={:?}",
                req.request_tag,
                prompt.chars().take(80).collect::<String>()
            ))),
        }
    }
}

// ─── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str, prompt: &str) -> ChatRequest {
        ChatRequest::new("m", tag, prompt)
    }

    #[test]
    fn test_first_matching_rule_wins() {
        let script = MockScript::new()
            .rule(Some("judge"), None, "from judge rule")
            .rule(None, None, "from catch-all rule");
        let backend = MockBackend::new(script);
        assert_eq!(backend.complete(&req("judge", "x")).unwrap().text, "from judge rule");
        assert_eq!(backend.complete(&req("other", "x")).unwrap().text, "from catch-all rule");
    }

    #[test]
    fn test_prompt_substring_matching() {
        let script = MockScript::new()
            .rule(None, Some("spiral"), "spiral answer")
            .rule(None, None, "fallback");
        let backend = MockBackend::new(script);
        assert_eq!(backend.complete(&req("t", "draw a spiral")).unwrap().text, "spiral answer");
        assert_eq!(backend.complete(&req("t", "draw a square")).unwrap().text, "fallback");
    }

    #[test]
    fn test_reply_sequence_sticks_at_last() {
        let script = MockScript::new().rule_seq(
            None,
            None,
            vec![MockReply::text("first"), MockReply::text("second")],
        );
        let backend = MockBackend::new(script);
        assert_eq!(backend.complete(&req("t", "p")).unwrap().text, "first");
        assert_eq!(backend.complete(&req("t", "p")).unwrap().text, "second");
        assert_eq!(backend.complete(&req("t", "p")).unwrap().text, "second");
    }

    #[test]
    fn test_unmatched_without_default_refuses() {
        let backend = MockBackend::new(MockScript::new());
        let err = backend.complete(&req("t", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::BackendRefused(_)));
    }

    #[test]
    fn test_script_round_trips_through_json() {
        let script = MockScript::new()
            .rule(Some("a"), Some("b"), "c")
            .rule_seq(None, None, vec![MockReply::RateLimited, MockReply::text("ok")]);
        let json = serde_json::to_string(&script).unwrap();
        let back: MockScript = serde_json::from_str(&json).unwrap();
        assert_eq!(back, script);
    }
}
