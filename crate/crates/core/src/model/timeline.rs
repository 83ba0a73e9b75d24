use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::block::{AnimationBlock, BlockArgs, BlockCategory, StyleOverrides};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapStyle {
    #[default]
    Streets,
    Satellite,
    Light,
    Dark,
    Terrain,
}

/// Ordered blocks plus the basemap style. The duration is always derived
/// from the blocks, never stored independently.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    pub blocks: Vec<AnimationBlock>,
    pub map_style: MapStyle,
}

#[derive(Serialize, Deserialize)]
struct TimelineDoc {
    blocks: Vec<AnimationBlock>,
    #[serde(default, serialize_with = "crate::canonical::serialize_millis")]
    duration: f64,
    #[serde(default)]
    map_style: MapStyle,
}

impl Serialize for Timeline {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TimelineDoc {
            blocks: self.blocks.clone(),
            duration: self.duration(),
            map_style: self.map_style,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Timeline {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // The stored duration is informational; it is recomputed.
        let doc = TimelineDoc::deserialize(d)?;
        Ok(Timeline {
            blocks: doc.blocks,
            map_style: doc.map_style,
        })
    }
}

impl Timeline {
    pub fn new(blocks: Vec<AnimationBlock>) -> Self {
        Self {
            blocks,
            map_style: MapStyle::default(),
        }
    }

    /// Latest end time over all blocks, 0 when empty.
    pub fn duration(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.end_time)
            .fold(0.0, f64::max)
    }

    pub fn block(&self, id: &str) -> Option<&AnimationBlock> {
        self.blocks.iter().find(|b| b.id == id)
    }

    fn position(&self, id: &str) -> Result<usize, EditError> {
        self.blocks
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| EditError::NotFound(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    /// Two blocks that may not overlap share time.
    Overlap,
    /// Highlight or element block without a camera block framing it.
    MissingCamera,
    /// A block breaks one of its own invariants.
    InvalidBlock,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    pub block_ids: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Warning)
    }

    /// No error-severity violations. Warnings do not block authoring.
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, code: ViolationCode) -> usize {
        self.violations.iter().filter(|v| v.code == code).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// How far before a content block a camera block may end and still frame it.
    pub camera_lead_window: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            camera_lead_window: 0.5,
        }
    }
}

pub fn validate_timeline(timeline: &Timeline) -> ValidationReport {
    validate_timeline_with(timeline, &ValidationOptions::default())
}

/// Checks structural rules. Never fails: problems are reported, not raised.
///
/// Content blocks (highlights and elements) must not overlap each other,
/// camera blocks must not overlap each other, and camera blocks may overlap
/// content freely. A content block that starts without a camera block
/// covering it (or ending within the lead window before it) yields a warning.
pub fn validate_timeline_with(timeline: &Timeline, opts: &ValidationOptions) -> ValidationReport {
    let mut violations = Vec::new();
    let blocks = &timeline.blocks;

    let mut seen = std::collections::BTreeMap::<&str, usize>::new();
    for b in blocks {
        *seen.entry(b.id.as_str()).or_default() += 1;
    }
    for (id, n) in seen.into_iter().filter(|(_, n)| *n > 1) {
        violations.push(Violation {
            code: ViolationCode::DuplicateId,
            severity: Severity::Error,
            block_ids: vec![id.to_string()],
            message: format!("block id `{id}` used {n} times"),
        });
    }

    for b in blocks {
        let errs = b.check();
        if !errs.is_empty() {
            violations.push(Violation {
                code: ViolationCode::InvalidBlock,
                severity: Severity::Error,
                block_ids: vec![b.id.clone()],
                message: errs.join("; "),
            });
        }
    }

    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            if a.kind().is_camera() != b.kind().is_camera() || !a.overlaps(b) {
                continue;
            }
            let what = if a.kind().is_camera() {
                "camera blocks"
            } else {
                "content blocks"
            };
            violations.push(Violation {
                code: ViolationCode::Overlap,
                severity: Severity::Error,
                block_ids: vec![a.id.clone(), b.id.clone()],
                message: format!(
                    "{what} `{}` [{}, {}) and `{}` [{}, {}) overlap",
                    a.id, a.start_time, a.end_time, b.id, b.start_time, b.end_time
                ),
            });
        }
    }

    let cameras: Vec<&AnimationBlock> = blocks.iter().filter(|b| b.kind().is_camera()).collect();
    for b in blocks.iter().filter(|b| !b.kind().is_camera()) {
        let framed = cameras.iter().any(|c| {
            c.is_active_at(b.start_time)
                || (c.end_time <= b.start_time
                    && b.start_time - c.end_time <= opts.camera_lead_window)
        });
        if !framed {
            let category = match b.kind().category() {
                BlockCategory::Highlight => "highlight",
                _ => "element",
            };
            violations.push(Violation {
                code: ViolationCode::MissingCamera,
                severity: Severity::Warning,
                block_ids: vec![b.id.clone()],
                message: format!(
                    "{category} block `{}` at {}s is not preceded by a camera block",
                    b.id, b.start_time
                ),
            });
        }
    }

    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EditError {
    #[error("block `{0}` not found")]
    NotFound(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// A single timeline mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Retime {
        id: String,
        start_time: f64,
        end_time: f64,
    },
    /// Moves a block to `index` in the block list. Times are unchanged.
    Reorder { id: String, index: usize },
    Delete { id: String },
    UpdateArgs { id: String, args: BlockArgs },
    UpdateStyle { id: String, style: StyleOverrides },
    Insert {
        block: AnimationBlock,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
    },
}

/// Returns a new timeline with `edit` applied. Untouched blocks are copied as-is.
pub fn apply_edit(timeline: &Timeline, edit: &Edit) -> Result<Timeline, EditError> {
    let mut out = timeline.clone();
    match edit {
        Edit::Retime {
            id,
            start_time,
            end_time,
        } => {
            let i = out.position(id)?;
            if !(start_time.is_finite() && *start_time >= 0.0) {
                return Err(EditError::Invariant(format!(
                    "start_time {start_time} must be >= 0"
                )));
            }
            if !(end_time.is_finite() && end_time > start_time) {
                return Err(EditError::Invariant(format!(
                    "end_time {end_time} must exceed start_time {start_time}"
                )));
            }
            out.blocks[i].start_time = *start_time;
            out.blocks[i].end_time = *end_time;
        }
        Edit::Reorder { id, index } => {
            let i = out.position(id)?;
            let block = out.blocks.remove(i);
            let index = (*index).min(out.blocks.len());
            out.blocks.insert(index, block);
        }
        Edit::Delete { id } => {
            let i = out.position(id)?;
            out.blocks.remove(i);
        }
        Edit::UpdateArgs { id, args } => {
            let i = out.position(id)?;
            if out.blocks[i].kind() != args.kind() {
                return Err(EditError::Invariant(format!(
                    "cannot change block `{id}` from {} to {}",
                    out.blocks[i].kind(),
                    args.kind()
                )));
            }
            let errs = args.check();
            if !errs.is_empty() {
                return Err(EditError::Invariant(errs.join("; ")));
            }
            out.blocks[i].args = args.clone();
        }
        Edit::UpdateStyle { id, style } => {
            let i = out.position(id)?;
            if let Some(o) = style.opacity {
                if !(0.0..=1.0).contains(&o) {
                    return Err(EditError::Invariant(format!("opacity {o} outside [0, 1]")));
                }
            }
            out.blocks[i].style = style.clone();
        }
        Edit::Insert { block, index } => {
            if out.block(&block.id).is_some() {
                return Err(EditError::Invariant(format!(
                    "block id `{}` already exists",
                    block.id
                )));
            }
            let errs = block.check();
            if !errs.is_empty() {
                return Err(EditError::Invariant(errs.join("; ")));
            }
            let index = index.unwrap_or(out.blocks.len()).min(out.blocks.len());
            out.blocks.insert(index, block.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geo::{GeoPoint, GeoShape, Polygon};

    fn highlight(id: &str, s: f64, e: f64) -> AnimationBlock {
        AnimationBlock::new(
            id,
            s,
            e,
            BlockArgs::HighlightArea {
                shape: GeoShape::polygon(Polygon::rect(0.0, 0.0, 1.0, 1.0)),
            },
        )
    }

    fn zoom(id: &str, s: f64, e: f64, lat: f64, lon: f64) -> AnimationBlock {
        AnimationBlock::new(
            id,
            s,
            e,
            BlockArgs::CameraZoom {
                target: GeoPoint::new(lat, lon),
                zoom_level: 8.0,
            },
        )
    }

    #[test]
    fn overlapping_highlights_are_reported() {
        let t = Timeline::new(vec![highlight("a", 0.0, 5.0), highlight("b", 3.0, 8.0)]);
        let r = validate_timeline(&t);
        assert_eq!(r.count(ViolationCode::Overlap), 1);
        assert!(!r.is_valid());
    }

    #[test]
    fn camera_may_overlap_content() {
        let t = Timeline::new(vec![zoom("c", 0.0, 3.0, 0.0, 0.0), highlight("h", 1.0, 5.0)]);
        let r = validate_timeline(&t);
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn camera_blocks_may_not_overlap_each_other() {
        let t = Timeline::new(vec![
            zoom("c1", 0.0, 3.0, 0.0, 0.0),
            zoom("c2", 2.0, 4.0, 1.0, 1.0),
        ]);
        assert_eq!(validate_timeline(&t).count(ViolationCode::Overlap), 1);
    }

    #[test]
    fn empty_timeline_is_valid() {
        let r = validate_timeline(&Timeline::default());
        assert!(r.is_clean());
        assert_eq!(Timeline::default().duration(), 0.0);
    }

    #[test]
    fn touching_intervals_do_not_overlap() {
        let t = Timeline::new(vec![highlight("a", 0.0, 5.0), highlight("b", 5.0, 8.0)]);
        assert_eq!(validate_timeline(&t).count(ViolationCode::Overlap), 0);
    }

    #[test]
    fn missing_camera_is_a_warning() {
        let t = Timeline::new(vec![highlight("h", 1.0, 2.0)]);
        let r = validate_timeline(&t);
        assert!(r.is_valid());
        assert_eq!(r.count(ViolationCode::MissingCamera), 1);

        // A camera ending within the lead window counts as framing.
        let t = Timeline::new(vec![zoom("c", 0.0, 0.8, 0.0, 0.0), highlight("h", 1.0, 2.0)]);
        assert!(validate_timeline(&t).is_clean());
        let t = Timeline::new(vec![zoom("c", 0.0, 0.4, 0.0, 0.0), highlight("h", 1.0, 2.0)]);
        assert_eq!(validate_timeline(&t).count(ViolationCode::MissingCamera), 1);
    }

    #[test]
    fn duplicate_ids_and_block_invariants() {
        let mut bad = highlight("a", 2.0, 1.0);
        bad.style.opacity = Some(2.0);
        let t = Timeline::new(vec![bad, highlight("a", 5.0, 6.0)]);
        let r = validate_timeline(&t);
        assert_eq!(r.count(ViolationCode::DuplicateId), 1);
        assert_eq!(r.count(ViolationCode::InvalidBlock), 1);
    }

    #[test]
    fn delete_sole_block() {
        let t = Timeline::new(vec![highlight("a", 0.0, 5.0)]);
        let t2 = apply_edit(&t, &Edit::Delete { id: "a".into() }).unwrap();
        assert!(t2.blocks.is_empty());
        assert_eq!(t2.duration(), 0.0);
    }

    #[test]
    fn retime_extends_duration() {
        let t = Timeline::new(vec![highlight("a", 0.0, 2.0), highlight("b", 2.0, 5.0)]);
        let t2 = apply_edit(
            &t,
            &Edit::Retime {
                id: "b".into(),
                start_time: 2.0,
                end_time: 7.0,
            },
        )
        .unwrap();
        assert_eq!(t.duration(), 5.0);
        assert_eq!(t2.duration(), 7.0);
        assert_eq!(t2.blocks[0], t.blocks[0]);
    }

    #[test]
    fn retime_rejects_inverted_interval() {
        let t = Timeline::new(vec![highlight("a", 0.0, 2.0)]);
        let e = apply_edit(
            &t,
            &Edit::Retime {
                id: "a".into(),
                start_time: 3.0,
                end_time: 3.0,
            },
        );
        assert!(matches!(e, Err(EditError::Invariant(_))));
    }

    #[test]
    fn unknown_id_is_not_found() {
        let t = Timeline::new(vec![highlight("a", 0.0, 2.0)]);
        assert_eq!(
            apply_edit(&t, &Edit::Delete { id: "zz".into() }),
            Err(EditError::NotFound("zz".into()))
        );
    }

    #[test]
    fn update_args_touches_only_target() {
        let t = Timeline::new(vec![
            zoom("london", 0.0, 3.0, 51.5074, -0.1278),
            highlight("h", 1.0, 4.0),
        ]);
        let paris = BlockArgs::CameraZoom {
            target: GeoPoint::new(48.8566, 2.3522),
            zoom_level: 8.0,
        };
        let t2 = apply_edit(
            &t,
            &Edit::UpdateArgs {
                id: "london".into(),
                args: paris.clone(),
            },
        )
        .unwrap();
        // Structural diff of the two documents: exactly one path differs.
        let before = serde_json::to_value(&t).unwrap();
        let after = serde_json::to_value(&t2).unwrap();
        let diffs = json_diff_paths(&before, &after, String::new());
        assert_eq!(
            diffs,
            vec!["/blocks/0/args/target/lat", "/blocks/0/args/target/lon"]
        );
    }

    #[test]
    fn update_args_cannot_change_kind() {
        let t = Timeline::new(vec![highlight("h", 1.0, 4.0)]);
        let e = apply_edit(
            &t,
            &Edit::UpdateArgs {
                id: "h".into(),
                args: BlockArgs::HighlightPoint {
                    point: GeoPoint::new(0.0, 0.0),
                },
            },
        );
        assert!(matches!(e, Err(EditError::Invariant(_))));
    }

    #[test]
    fn reorder_and_insert() {
        let t = Timeline::new(vec![highlight("a", 0.0, 1.0), highlight("b", 1.0, 2.0)]);
        let t2 = apply_edit(
            &t,
            &Edit::Reorder {
                id: "b".into(),
                index: 0,
            },
        )
        .unwrap();
        assert_eq!(t2.blocks[0].id, "b");
        let t3 = apply_edit(
            &t2,
            &Edit::Insert {
                block: highlight("c", 2.0, 3.0),
                index: None,
            },
        )
        .unwrap();
        assert_eq!(t3.blocks.len(), 3);
        assert!(apply_edit(
            &t3,
            &Edit::Insert {
                block: highlight("c", 4.0, 5.0),
                index: None
            }
        )
        .is_err());
    }

    fn json_diff_paths(a: &serde_json::Value, b: &serde_json::Value, at: String) -> Vec<String> {
        use serde_json::Value;
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let mut keys: Vec<_> = x.keys().chain(y.keys()).cloned().collect();
                keys.sort();
                keys.dedup();
                keys.into_iter()
                    .flat_map(|k| {
                        json_diff_paths(
                            x.get(&k).unwrap_or(&Value::Null),
                            y.get(&k).unwrap_or(&Value::Null),
                            format!("{at}/{k}"),
                        )
                    })
                    .collect()
            }
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
                .iter()
                .zip(y)
                .enumerate()
                .flat_map(|(i, (p, q))| json_diff_paths(p, q, format!("{at}/{i}")))
                .collect(),
            _ if a == b => vec![],
            _ => vec![at],
        }
    }
}
