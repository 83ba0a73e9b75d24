use std::collections::BTreeMap;

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::breakdown::SceneBreakdown;
use super::session::ResearchSession;
use super::timeline::Timeline;
use crate::canonical::{to_canonical_pretty, CanonicalError};

/// Raw image bytes, base64-encoded in documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Asset(pub Vec<u8>);

impl Serialize for Asset {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Asset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s.as_bytes())
            .map(Asset)
            .map_err(serde::de::Error::custom)
    }
}

/// Everything about one animation: the script, its breakdown, the compiled
/// timeline, per-block research sessions and uploaded assets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub script: String,
    #[serde(default)]
    pub breakdown: SceneBreakdown,
    #[serde(default)]
    pub timeline: Timeline,
    #[serde(default)]
    pub sessions: BTreeMap<String, ResearchSession>,
    #[serde(default)]
    pub assets: BTreeMap<String, Asset>,
    /// Unix milliseconds.
    #[serde(default)]
    pub created_at: u64,
    #[serde(default)]
    pub modified_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error(transparent)]
    Encode(#[from] CanonicalError),
    #[error("malformed project document: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Project {
    pub fn new(id: impl Into<String>, script: impl Into<String>, now_ms: u64) -> Self {
        Self {
            id: id.into(),
            script: script.into(),
            created_at: now_ms,
            modified_at: now_ms,
            ..Self::default()
        }
    }

    /// Canonical document text.
    pub fn to_document(&self) -> Result<String, DocumentError> {
        Ok(to_canonical_pretty(self)?)
    }

    pub fn from_document(text: &str) -> Result<Self, DocumentError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Cross-reference checks that span the breakdown, timeline and sessions.
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for key in self.sessions.keys() {
            if self.timeline.block(key).is_none() && self.breakdown.item(key).is_none() {
                errs.push(format!(
                    "session `{key}` references no block or breakdown item"
                ));
            }
        }
        for item in &self.breakdown.items {
            errs.extend(item.check());
        }
        errs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::block::{AnimationBlock, BlockArgs, BlockKind};
    use crate::model::breakdown::SceneBreakdownItem;
    use crate::model::geo::GeoPoint;
    use proptest::prelude::*;

    fn sample(lat: f64, lon: f64, start: f64, len: f64, note: String) -> Project {
        let mut p = Project::new("p1", "Zoom somewhere.", 1_700_000_000_000);
        let mut item = SceneBreakdownItem::new("i1", BlockKind::CameraZoom, "zoom", "zoom there");
        item.user_notes = note;
        item.resolve(BlockArgs::CameraZoom {
            target: GeoPoint::new(lat, lon),
            zoom_level: 7.25,
        });
        p.breakdown.items.push(item);
        p.timeline.blocks.push(AnimationBlock::new(
            "i1",
            start,
            start + len,
            BlockArgs::CameraZoom {
                target: GeoPoint::new(lat, lon),
                zoom_level: 7.25,
            },
        ));
        p.sessions
            .insert("i1".into(), ResearchSession::new("i1"));
        p.assets.insert("a1".into(), Asset(vec![0, 1, 2, 255]));
        p
    }

    #[test]
    fn session_keys_must_reference_something() {
        let mut p = sample(1.0, 2.0, 0.0, 1.0, String::new());
        assert!(p.check().is_empty());
        p.sessions.insert("ghost".into(), ResearchSession::new("ghost"));
        assert_eq!(p.check().len(), 1);
    }

    proptest! {
        #[test]
        fn document_round_trip_is_byte_stable(
            lat in -90.0f64..90.0, lon in -180.0f64..180.0,
            start in 0.0f64..100.0, len in 0.001f64..50.0,
            note in "\\PC{0,20}",
        ) {
            let p = sample(lat, lon, start, len, note);
            let first = p.to_document().unwrap();
            let parsed = Project::from_document(&first).unwrap();
            let second = parsed.to_document().unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
