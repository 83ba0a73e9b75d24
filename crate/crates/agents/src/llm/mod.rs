//! Provider-neutral chat completions with tool calling.

mod gateway;
mod http;
pub mod schema;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use storymap_core::canonical::{sha256_hex, to_canonical_string};
use storymap_core::{ChatMessage, Role};
use thiserror::Error;

pub use gateway::{
    AgentRole, BackendError, ChatBackend, Fixture, Gateway, LlmConfig, Mode, RetryPolicy,
};
pub use http::HttpBackend;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no fixture for {agent} request {hash}")]
    FixtureMissing { agent: String, hash: String },
    #[error(
        "no fixture for {agent} request {hash}: the {agent} system prompt changed \
         (recorded {recorded}, current {current}); re-record fixtures"
    )]
    PromptDrift {
        agent: String,
        hash: String,
        recorded: String,
        current: String,
    },
    #[error("provider returned {status}: {message}")]
    Provider {
        status: u16,
        message: String,
        retry_after_secs: Option<u64>,
    },
    #[error("network error: {0}")]
    Network(String),
    #[error("tool call arguments violate the schema: {message}")]
    SchemaViolation { message: String, raw: String },
    #[error("response has no call to tool {expected}")]
    MissingCall { expected: String },
    #[error("unreadable provider response: {message}")]
    Parse { message: String, raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no endpoint configured for {0}")]
    NotConfigured(String),
    #[error("fixture i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Raw model output attached to the error, if any.
    pub fn raw(&self) -> Option<&str> {
        match self {
            LlmError::SchemaViolation { raw, .. } | LlmError::Parse { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

impl ToolSchema {
    pub fn check(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("tool name is empty".into());
        }
        schema::check_schema(&self.parameters, "")
            .map_err(|e| format!("tool {}: {e}", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolSchema>,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>, tools: Vec<ToolSchema>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            tools,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let first = self.messages.first().ok_or("request has no messages")?;
        if !matches!(first.role, Role::System | Role::User) {
            return Err("first message must be system or user".into());
        }
        let mut names: Vec<&str> = self.tools.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err("tool names must be unique".into());
        }
        self.tools.iter().try_for_each(ToolSchema::check)
    }

    /// Hash of the canonical serialization; the fixture key.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn canonical(&self) -> String {
        to_canonical_string(self).expect("requests hold only finite numbers")
    }

    /// Hash of the concatenated system messages.
    pub fn prompt_hash(&self) -> String {
        let system: Vec<&str> = self
            .messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .collect();
        sha256_hex(system.join("\n").as_bytes())
    }

    /// Hash of the request with system prompts blanked; equal bodies with
    /// different prompt hashes indicate prompt drift.
    pub fn body_hash(&self) -> String {
        let mut blank = self.clone();
        for m in &mut blank.messages {
            if m.role == Role::System {
                m.content.clear();
            }
        }
        blank.hash()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Value,
    /// Arguments exactly as the model produced them.
    pub raw_arguments: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: Option<String>,
    pub tool_calls: Vec<ToolCall>,
    pub usage: Usage,
    /// Wall time of the provider call; 0 for replayed responses.
    pub latency_ms: u64,
}

impl ChatResponse {
    /// Parses an OpenAI-style chat-completions body.
    pub fn from_wire(raw: &str) -> Result<Self, LlmError> {
        let parse_err = |message: String| LlmError::Parse {
            message,
            raw: raw.to_string(),
        };
        let body: Value = serde_json::from_str(raw).map_err(|e| parse_err(e.to_string()))?;
        let message = body
            .pointer("/choices/0/message")
            .ok_or_else(|| parse_err("missing choices[0].message".into()))?;
        let text = message
            .get("content")
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .map(str::to_string);
        let mut tool_calls = Vec::new();
        for call in message
            .get("tool_calls")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
            .unwrap_or_default()
        {
            let f = call
                .get("function")
                .ok_or_else(|| parse_err("tool call without function".into()))?;
            let name = f
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| parse_err("tool call without name".into()))?
                .to_string();
            let (arguments, raw_arguments) = match f.get("arguments") {
                Some(Value::String(s)) => {
                    let v = serde_json::from_str(s).map_err(|e| LlmError::SchemaViolation {
                        message: format!("arguments of {name} are not valid JSON: {e}"),
                        raw: s.clone(),
                    })?;
                    (v, s.clone())
                }
                Some(v @ Value::Object(_)) => (v.clone(), v.to_string()),
                _ => (Value::Object(Default::default()), "{}".to_string()),
            };
            tool_calls.push(ToolCall {
                name,
                arguments,
                raw_arguments,
            });
        }
        if text.is_none() && tool_calls.is_empty() {
            return Err(parse_err("response has neither text nor tool calls".into()));
        }
        let usage = Usage {
            prompt_tokens: body.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: body
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        Ok(Self {
            text,
            tool_calls,
            usage,
            latency_ms: 0,
        })
    }
}

/// Wire body for a chat-completions endpoint.
pub fn to_wire(req: &ChatRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
                Role::Tool => "tool",
            };
            serde_json::json!({"role": role, "content": m.content})
        })
        .collect();
    let mut body = serde_json::json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    });
    if !req.tools.is_empty() {
        body["tools"] = req
            .tools
            .iter()
            .map(|t| {
                serde_json::json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    }
                })
            })
            .collect();
    }
    body
}

/// First call to `expected`, with arguments coerced to its schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCall {
    pub name: String,
    pub arguments: Value,
    pub warnings: Vec<String>,
}

pub fn parse_tool_call(resp: &ChatResponse, expected: &ToolSchema) -> Result<ParsedCall, LlmError> {
    let call = resp
        .tool_calls
        .iter()
        .find(|c| c.name == expected.name)
        .ok_or_else(|| LlmError::MissingCall {
            expected: expected.name.clone(),
        })?;
    let (mut warnings, mut errors) = (Vec::new(), Vec::new());
    let arguments = schema::coerce(&call.arguments, &expected.parameters, "", &mut warnings, &mut errors);
    if !errors.is_empty() {
        return Err(LlmError::SchemaViolation {
            message: errors.join("; "),
            raw: call.raw_arguments.clone(),
        });
    }
    for w in &warnings {
        tracing::warn!(tool = %expected.name, "{w}");
    }
    Ok(ParsedCall {
        name: call.name.clone(),
        arguments,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tool() -> ToolSchema {
        ToolSchema {
            name: "locate".into(),
            description: "Locate a place".into(),
            parameters: json!({
                "type": "object",
                "properties": {"lat": {"type": "number"}, "lon": {"type": "number"}},
                "required": ["lat", "lon"]
            }),
        }
    }

    fn wire(content: Value, calls: Value) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content, "tool_calls": calls}}],
               "usage": {"prompt_tokens": 10, "completion_tokens": 3}})
        .to_string()
    }

    #[test]
    fn parses_tool_calls_and_coerces() {
        let raw = wire(
            Value::Null,
            json!([{"id": "c1", "type": "function",
                    "function": {"name": "locate", "arguments": "{\"lat\":\"51.5074\",\"lon\":\"-0.1278\",\"note\":1}"}}]),
        );
        let resp = ChatResponse::from_wire(&raw).unwrap();
        assert_eq!(resp.usage.prompt_tokens, 10);
        let call = parse_tool_call(&resp, &tool()).unwrap();
        assert_eq!(call.arguments, json!({"lat": 51.5074, "lon": -0.1278}));
        assert_eq!(call.warnings.len(), 1);
    }

    #[test]
    fn text_only_response_has_no_call() {
        let resp = ChatResponse::from_wire(&wire(json!("hello"), json!([]))).unwrap();
        assert_eq!(resp.text.as_deref(), Some("hello"));
        assert!(matches!(parse_tool_call(&resp, &tool()), Err(LlmError::MissingCall { .. })));
    }

    #[test]
    fn missing_field_is_a_schema_violation_with_raw_text() {
        let raw = wire(
            Value::Null,
            json!([{"function": {"name": "locate", "arguments": "{\"lat\": 1}"}}]),
        );
        let resp = ChatResponse::from_wire(&raw).unwrap();
        match parse_tool_call(&resp, &tool()) {
            Err(LlmError::SchemaViolation { message, raw }) => {
                assert!(message.contains("lon"));
                assert_eq!(raw, "{\"lat\": 1}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn request_hash_ignores_nothing_but_formatting() {
        let a = ChatRequest::new("m", vec![ChatMessage::user("hi")], vec![tool()]);
        let mut b = a.clone();
        b.messages[0].content.push('!');
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        let mut c = a.clone();
        c.messages.insert(0, ChatMessage::system("prompt"));
        let mut d = c.clone();
        d.messages[0].content = "other prompt".into();
        assert_eq!(c.body_hash(), d.body_hash());
        assert_ne!(c.prompt_hash(), d.prompt_hash());
    }

    #[test]
    fn request_checks() {
        let mut r = ChatRequest::new("m", vec![ChatMessage::assistant("x")], vec![]);
        assert!(r.check().is_err());
        r.messages[0] = ChatMessage::user("x");
        assert!(r.check().is_ok());
        r.tools = vec![tool(), tool()];
        assert!(r.check().is_err());
    }
}
