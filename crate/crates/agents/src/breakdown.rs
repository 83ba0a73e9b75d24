//! Scene breakdown agent: script in, ordered plain-language items out.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use storymap_core::canonical::{format_float, to_canonical_pretty, to_canonical_string};
use storymap_core::{script_hash, BlockKind, ChatMessage, SceneBreakdown, SceneBreakdownItem};
use thiserror::Error;

use crate::compile::BreakdownOptions;
use crate::llm::{parse_tool_call, AgentRole, ChatRequest, ChatResponse, Gateway, LlmError, ToolSchema};
use crate::prompts;

pub const TOOL_NAME: &str = "emit_breakdown";
/// Re-prompts after a malformed `emit_breakdown` call.
pub const MAX_REPAIRS: usize = 2;
/// Re-prompts after a regenerate drops or retypes a block with user notes.
pub const MAX_NOTE_REPAIRS: usize = 1;

#[derive(Debug, Error)]
pub enum BreakdownError {
    #[error("script is empty")]
    EmptyScript,
    #[error("invalid options: {0}")]
    Options(String),
    #[error("invalid edit: {0}")]
    Edit(String),
    #[error("breakdown failed: {message}")]
    Failed { message: String, raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

pub fn tool() -> ToolSchema {
    let kinds: Vec<&str> = BlockKind::ALL.iter().map(|k| k.as_str()).collect();
    ToolSchema {
        name: TOOL_NAME.into(),
        description: "Emit the ordered list of animation blocks for the script.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "items": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "id": {"type": "string"},
                            "kind": {"type": "string", "enum": kinds},
                            "short_description": {"type": "string"},
                            "long_description": {"type": "string"}
                        },
                        "required": ["kind", "short_description", "long_description"]
                    }
                }
            },
            "required": ["items"]
        }),
    }
}

/// An item as the model returns it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
struct Planned {
    #[serde(default)]
    id: Option<String>,
    kind: BlockKind,
    short_description: String,
    long_description: String,
}

/// A user edit applied before regeneration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ItemEdit {
    Update {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kind: Option<BlockKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        short_description: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        long_description: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        user_notes: Option<String>,
    },
    Delete {
        id: String,
    },
    /// Moves the item to position `to` in the list after removal.
    Move {
        id: String,
        to: usize,
    },
    Insert {
        at: usize,
        kind: BlockKind,
        short_description: String,
        long_description: String,
        #[serde(default)]
        user_notes: String,
    },
}

/// Hands out `item-N` ids not used before in this breakdown.
struct Ids {
    next: u64,
}

impl Ids {
    fn after<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let max = ids
            .into_iter()
            .filter_map(|id| id.strip_prefix("item-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        Self { next: max + 1 }
    }

    fn fresh(&mut self) -> String {
        let id = format!("item-{}", self.next);
        self.next += 1;
        id
    }
}

/// Applies edits in order. Items whose kind or long description change lose
/// their researched arguments.
pub fn apply_edits(breakdown: &SceneBreakdown, edits: &[ItemEdit]) -> Result<SceneBreakdown, BreakdownError> {
    let mut out = breakdown.clone();
    let mut ids = Ids::after(breakdown.items.iter().map(|i| i.id.as_str()));
    let position = |items: &[SceneBreakdownItem], id: &str| {
        items
            .iter()
            .position(|i| i.id == id)
            .ok_or_else(|| BreakdownError::Edit(format!("no item with id `{id}`")))
    };
    for edit in edits {
        match edit {
            ItemEdit::Update {
                id,
                kind,
                short_description,
                long_description,
                user_notes,
            } => {
                let at = position(&out.items, id)?;
                let item = &mut out.items[at];
                let mut replan = false;
                if let Some(k) = kind {
                    replan |= *k != item.kind;
                    item.kind = *k;
                }
                if let Some(s) = short_description {
                    item.short_description = s.clone();
                }
                if let Some(l) = long_description {
                    replan |= *l != item.long_description;
                    item.long_description = l.clone();
                }
                if let Some(n) = user_notes {
                    item.user_notes = n.clone();
                }
                if replan {
                    item.args = None;
                    item.resolved = false;
                }
            }
            ItemEdit::Delete { id } => {
                let at = position(&out.items, id)?;
                out.items.remove(at);
            }
            ItemEdit::Move { id, to } => {
                let at = position(&out.items, id)?;
                let item = out.items.remove(at);
                if *to > out.items.len() {
                    return Err(BreakdownError::Edit(format!("position {to} is past the end")));
                }
                out.items.insert(*to, item);
            }
            ItemEdit::Insert {
                at,
                kind,
                short_description,
                long_description,
                user_notes,
            } => {
                if *at > out.items.len() {
                    return Err(BreakdownError::Edit(format!("position {at} is past the end")));
                }
                let mut item = SceneBreakdownItem::new(ids.fresh(), *kind, short_description, long_description);
                item.user_notes = user_notes.clone();
                out.items.insert(*at, item);
            }
        }
    }
    Ok(out)
}

fn script_message(script: &str, opts: &BreakdownOptions) -> String {
    format!(
        "Script:\n{}\n\nTarget length: {} s.",
        script.trim(),
        format_float(opts.target_duration)
    )
}

/// Splits a script into breakdown items.
pub async fn breakdown(
    gateway: &Gateway,
    script: &str,
    opts: &BreakdownOptions,
) -> Result<SceneBreakdown, BreakdownError> {
    if script.trim().is_empty() {
        return Err(BreakdownError::EmptyScript);
    }
    opts.check().map_err(BreakdownError::Options)?;
    let messages = vec![
        ChatMessage::system(prompts::BREAKDOWN),
        ChatMessage::user(script_message(script, opts)),
    ];
    let planned = plan(gateway, messages, |_| Ok(())).await?;
    let mut ids = Ids::after([]);
    let items = planned
        .into_iter()
        .map(|p| SceneBreakdownItem::new(ids.fresh(), p.kind, p.short_description, p.long_description))
        .collect();
    Ok(SceneBreakdown {
        items,
        source_script_hash: script_hash(script),
    })
}

/// Applies `edits`, then asks the model to re-plan around the edited list.
pub async fn regenerate(
    gateway: &Gateway,
    current: &SceneBreakdown,
    edits: &[ItemEdit],
    script: &str,
    opts: &BreakdownOptions,
) -> Result<SceneBreakdown, BreakdownError> {
    if script.trim().is_empty() {
        return Err(BreakdownError::EmptyScript);
    }
    opts.check().map_err(BreakdownError::Options)?;
    let edited = apply_edits(current, edits)?;

    let listing: Vec<Value> = edited
        .items
        .iter()
        .map(|i| {
            let mut v = json!({
                "id": i.id,
                "kind": i.kind,
                "short_description": i.short_description,
                "long_description": i.long_description,
            });
            if !i.user_notes.is_empty() {
                v["user_notes"] = json!(i.user_notes);
            }
            v
        })
        .collect();
    let listing = to_canonical_pretty(&listing).expect("strings only");
    let messages = vec![
        ChatMessage::system(prompts::BREAKDOWN),
        ChatMessage::user(format!(
            "{}\n\nCurrent blocks, in order:\n{listing}\n\n\
             Re-plan the blocks for this script. Keep the ids and the order of the blocks you keep.",
            script_message(script, opts)
        )),
    ];

    let noted: Vec<(&str, BlockKind)> = edited
        .items
        .iter()
        .filter(|i| !i.user_notes.trim().is_empty())
        .map(|i| (i.id.as_str(), i.kind))
        .collect();
    let planned = plan(gateway, messages, |items| {
        let returned: HashMap<&str, BlockKind> = items
            .iter()
            .filter_map(|p| Some((p.id.as_deref()?, p.kind)))
            .collect();
        let lost: Vec<String> = noted
            .iter()
            .filter(|(id, kind)| returned.get(id) != Some(kind))
            .map(|(id, kind)| format!("block `{id}` has user notes and must be kept as {kind}"))
            .collect();
        if lost.is_empty() {
            Ok(())
        } else {
            Err(lost.join("; "))
        }
    })
    .await?;

    let mut previous: HashMap<&str, &SceneBreakdownItem> =
        edited.items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut ids = Ids::after(
        current
            .items
            .iter()
            .chain(&edited.items)
            .map(|i| i.id.as_str()),
    );
    let mut items = Vec::with_capacity(planned.len());
    for p in planned {
        // `remove` makes a repeated id count as new the second time.
        let item = match p.id.as_deref().and_then(|id| previous.remove(id)) {
            Some(prev) => {
                let mut item = prev.clone();
                if prev.kind != p.kind || prev.long_description != p.long_description {
                    item.args = None;
                    item.resolved = false;
                }
                item.kind = p.kind;
                item.short_description = p.short_description;
                item.long_description = p.long_description;
                item
            }
            None => SceneBreakdownItem::new(ids.fresh(), p.kind, p.short_description, p.long_description),
        };
        items.push(item);
    }
    Ok(SceneBreakdown {
        items,
        source_script_hash: script_hash(script),
    })
}

fn call_record(raw: &str) -> String {
    let arguments = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.into()));
    to_canonical_string(&json!({"tool": TOOL_NAME, "arguments": arguments})).expect("json value")
}

enum Attempt {
    Done(Vec<Planned>),
    Malformed { message: String, raw: String },
    Unacceptable { message: String, raw: String },
}

fn read_response(resp: &ChatResponse, tool: &ToolSchema) -> Result<Attempt, LlmError> {
    let call = match parse_tool_call(resp, tool) {
        Ok(c) => c,
        Err(LlmError::MissingCall { expected }) => {
            return Ok(Attempt::Malformed {
                message: format!("the reply did not call {expected}"),
                raw: resp.text.clone().unwrap_or_default(),
            })
        }
        Err(LlmError::SchemaViolation { message, raw }) => return Ok(Attempt::Malformed { message, raw }),
        Err(e) => return Err(e),
    };
    let raw = resp
        .tool_calls
        .iter()
        .find(|c| c.name == tool.name)
        .map(|c| c.raw_arguments.clone())
        .unwrap_or_default();
    let items: Vec<Planned> = match serde_json::from_value(call.arguments["items"].clone()) {
        Ok(items) => items,
        Err(e) => return Ok(Attempt::Malformed { message: e.to_string(), raw }),
    };
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (n, p) in items.iter().enumerate() {
        if p.short_description.trim().is_empty() {
            problems.push(format!("items[{n}].short_description is empty"));
        }
        if p.long_description.trim().is_empty() {
            problems.push(format!("items[{n}].long_description is empty"));
        }
        if let Some(id) = &p.id {
            if !seen.insert(id.as_str()) {
                problems.push(format!("id `{id}` appears more than once"));
            }
        }
    }
    Ok(if problems.is_empty() {
        Attempt::Done(items)
    } else {
        Attempt::Malformed {
            message: problems.join("; "),
            raw,
        }
    })
}

/// Runs the exchange with bounded repair re-prompts. `accept` is a
/// post-validation on well-formed output.
async fn plan(
    gateway: &Gateway,
    mut messages: Vec<ChatMessage>,
    accept: impl Fn(&[Planned]) -> Result<(), String>,
) -> Result<Vec<Planned>, BreakdownError> {
    let tool = tool();
    let (mut repairs, mut note_repairs) = (0, 0);
    loop {
        let req = ChatRequest::new(gateway.model_id(AgentRole::Breakdown), messages.clone(), vec![tool.clone()]);
        let attempt = match gateway.complete(AgentRole::Breakdown, &req).await {
            Ok(resp) => read_response(&resp, &tool)?,
            // The gateway rejects calls that break the declared schema.
            Err(LlmError::SchemaViolation { message, raw }) => Attempt::Malformed { message, raw },
            Err(e) => return Err(e.into()),
        };
        let attempt = match attempt {
            Attempt::Done(items) => match accept(&items) {
                Ok(()) => return Ok(items),
                Err(message) => Attempt::Unacceptable {
                    message,
                    raw: to_canonical_string(&json!({"items": items.iter().map(planned_json).collect::<Vec<_>>()}))
                        .expect("json value"),
                },
            },
            other => other,
        };
        let (message, raw) = match attempt {
            Attempt::Malformed { message, raw } if repairs < MAX_REPAIRS => {
                repairs += 1;
                (message, raw)
            }
            Attempt::Unacceptable { message, raw } if note_repairs < MAX_NOTE_REPAIRS => {
                note_repairs += 1;
                (message, raw)
            }
            Attempt::Malformed { message, raw } | Attempt::Unacceptable { message, raw } => {
                return Err(BreakdownError::Failed { message, raw })
            }
            Attempt::Done(_) => unreachable!(),
        };
        tracing::warn!("re-prompting breakdown: {message}");
        messages.push(ChatMessage::assistant(call_record(&raw)));
        messages.push(ChatMessage::user(format!(
            "That {TOOL_NAME} call was rejected: {message}. Call {TOOL_NAME} again with the corrected full list."
        )));
    }
}

fn planned_json(p: &Planned) -> Value {
    let mut v = json!({
        "kind": p.kind,
        "short_description": p.short_description,
        "long_description": p.long_description,
    });
    if let Some(id) = &p.id {
        v["id"] = json!(id);
    }
    v
}
