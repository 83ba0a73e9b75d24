//! Deterministic scheduling of a resolved breakdown into a timeline.
//!
//! Non-camera items are laid end to end in item order, each
//! `default_block_seconds` long unless its long description asks for a
//! duration, then scaled so the timeline ends at `target_duration`. Camera
//! items lead the content item that follows them by `camera_lead_seconds`
//! and last until that item ends, cut short where the next camera starts.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use storymap_core::canonical::round_millis;
use storymap_core::{
    script_hash, validate_timeline, AnimationBlock, SceneBreakdown, SceneBreakdownItem, Timeline,
};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BreakdownOptions {
    pub target_duration: f64,
    pub default_block_seconds: f64,
    pub camera_lead_seconds: f64,
}

impl Default for BreakdownOptions {
    fn default() -> Self {
        Self {
            target_duration: 30.0,
            default_block_seconds: 4.0,
            camera_lead_seconds: 0.5,
        }
    }
}

impl BreakdownOptions {
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("target_duration", self.target_duration),
            ("default_block_seconds", self.default_block_seconds),
            ("camera_lead_seconds", self.camera_lead_seconds),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompileError {
    #[error("item `{0}` is not resolved yet")]
    Unresolved(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("breakdown was planned from a different script")]
    ScriptMismatch,
    #[error("breakdown has no items")]
    Empty,
    #[error("compiled timeline is invalid: {0}")]
    Invalid(String),
}

static DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bduration\s*[:=]?\s*(\d+(?:\.\d+)?)\s*(?:s|secs?|seconds)\b").unwrap()
});

/// Requested length written in an item's long description, if any.
pub fn requested_seconds(item: &SceneBreakdownItem) -> Option<f64> {
    DURATION
        .captures(&item.long_description)
        .and_then(|c| c[1].parse::<f64>().ok())
        .filter(|s| *s > 0.0)
}

struct Slot {
    content: Option<usize>,
    cameras: Vec<usize>,
    len: f64,
}

/// [`compile`] after checking the breakdown belongs to `script`.
pub fn compile_for_script(
    breakdown: &SceneBreakdown,
    script: &str,
    opts: &BreakdownOptions,
) -> Result<Timeline, CompileError> {
    if breakdown.source_script_hash != script_hash(script) {
        return Err(CompileError::ScriptMismatch);
    }
    compile(breakdown, opts)
}

pub fn compile(breakdown: &SceneBreakdown, opts: &BreakdownOptions) -> Result<Timeline, CompileError> {
    opts.check().map_err(CompileError::Options)?;
    let items = &breakdown.items;
    if items.is_empty() {
        return Err(CompileError::Empty);
    }
    for item in items {
        if !item.resolved || item.args.is_none() {
            return Err(CompileError::Unresolved(item.id.clone()));
        }
        if let Some(e) = item.check().into_iter().next() {
            return Err(CompileError::Invalid(e));
        }
    }

    let mut slots = Vec::new();
    let mut pending = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if item.kind.is_camera() {
            pending.push(i);
        } else {
            slots.push(Slot {
                content: Some(i),
                cameras: std::mem::take(&mut pending),
                len: requested_seconds(item).unwrap_or(opts.default_block_seconds),
            });
        }
    }
    if !pending.is_empty() {
        // Trailing cameras get a slot of their own.
        slots.push(Slot {
            content: None,
            cameras: pending,
            len: opts.default_block_seconds,
        });
    }

    let lead = opts.camera_lead_seconds;
    let offset = if items[0].kind.is_camera() && slots[0].content.is_some() {
        lead
    } else {
        0.0
    };
    if offset >= opts.target_duration {
        return Err(CompileError::Options(format!(
            "target_duration {} leaves no room after the {} s camera lead",
            opts.target_duration, lead
        )));
    }
    let natural: f64 = slots.iter().map(|s| s.len).sum();
    let scale = (opts.target_duration - offset) / natural;

    let mut spans: Vec<Option<(f64, f64)>> = vec![None; items.len()];
    let mut cursor = offset;
    for (n, slot) in slots.iter().enumerate() {
        let start = cursor;
        let end = if n + 1 == slots.len() {
            opts.target_duration
        } else {
            cursor + slot.len * scale
        };
        cursor = end;
        if let Some(c) = slot.content {
            spans[c] = Some((start, end));
        }
        let cam_start = if slot.content.is_some() {
            (start - lead).max(0.0)
        } else {
            start
        };
        let width = (end - cam_start) / slot.cameras.len().max(1) as f64;
        for (j, &c) in slot.cameras.iter().enumerate() {
            spans[c] = Some((cam_start + j as f64 * width, cam_start + (j + 1) as f64 * width));
        }
    }

    // Camera blocks never overlap each other: each ends where the next begins.
    let cameras: Vec<usize> = (0..items.len()).filter(|&i| items[i].kind.is_camera()).collect();
    for w in cameras.windows(2) {
        let next_start = spans[w[1]].map(|s| s.0);
        if let (Some(span), Some(ns)) = (spans[w[0]].as_mut(), next_start) {
            span.1 = span.1.min(ns);
        }
    }

    let blocks: Vec<AnimationBlock> = items
        .iter()
        .zip(&spans)
        .map(|(item, span)| {
            let (s, e) = span.expect("every item is scheduled");
            let mut b = AnimationBlock::new(
                item.id.clone(),
                round_millis(s),
                round_millis(e),
                item.args.clone().expect("checked above"),
            );
            b.style = item.style.clone();
            b
        })
        .collect();
    let timeline = Timeline::new(blocks);
    let report = validate_timeline(&timeline);
    if !report.is_valid() {
        let msgs: Vec<String> = report.errors().map(|v| v.message.clone()).collect();
        return Err(CompileError::Invalid(msgs.join("; ")));
    }
    Ok(timeline)
}
