//! Inputs shared by the fixture author and the replay tests. Changing any
//! of these changes request hashes, so fixtures must be re-authored.
#![allow(dead_code)]

use std::path::PathBuf;

use storymap_agents::{BreakdownOptions, ItemEdit};
use storymap_core::{BlockKind, SceneBreakdown, SceneBreakdownItem};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn script(name: &str) -> String {
    let path = fixtures_dir().join("scripts").join(format!("{name}.txt"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn opts() -> BreakdownOptions {
    BreakdownOptions::default()
}

/// A one-item plan used as research context.
pub fn alone(item: &SceneBreakdownItem) -> SceneBreakdown {
    SceneBreakdown {
        items: vec![item.clone()],
        source_script_hash: String::new(),
    }
}

pub fn andhra() -> SceneBreakdownItem {
    SceneBreakdownItem::new(
        "andhra",
        BlockKind::HighlightArea,
        "Andhra Pradesh before 2014",
        "Highlight the state of Andhra Pradesh as it was before 2014, while Telangana was still part of it.",
    )
}

pub fn legislature() -> SceneBreakdownItem {
    SceneBreakdownItem::new(
        "legislature",
        BlockKind::HighlightPoint,
        "Ontario Legislative Building",
        "Mark the place in Toronto where the ceremonial mace is kept.",
    )
}

pub fn rockies() -> SceneBreakdownItem {
    SceneBreakdownItem::new(
        "rockies",
        BlockKind::HighlightArea,
        "Rocky Mountains",
        "Highlight the Rocky Mountains, the barrier that keeps Pacific rain away from the interior.",
    )
}

pub fn atlantis() -> SceneBreakdownItem {
    SceneBreakdownItem::new(
        "atlantis",
        BlockKind::HighlightArea,
        "Atlantis",
        "Highlight the lost island of Atlantis.",
    )
}

pub fn dakotas() -> SceneBreakdownItem {
    SceneBreakdownItem::new(
        "dakotas",
        BlockKind::ElementSpatialTransition,
        "The Dakotas merge",
        "Morph North Dakota into the merged North and South Dakota shape.",
    )
}

pub const ASK_BUILDING_YEAR: &str = "What year was the building constructed?";
pub const REMOVE_CANADA: &str = "Remove the Canadian part.";

pub fn delete_route() -> Vec<ItemEdit> {
    vec![ItemEdit::Delete { id: "item-2".into() }]
}

pub fn swap_first_two() -> Vec<ItemEdit> {
    vec![ItemEdit::Move {
        id: "item-2".into(),
        to: 0,
    }]
}

pub const TORONTO_ZOOM_10: &str = "Fly the camera to Toronto at zoom level 10.";

pub fn toronto_zoom_10() -> Vec<ItemEdit> {
    vec![ItemEdit::Update {
        id: "item-3".into(),
        kind: None,
        short_description: None,
        long_description: Some(TORONTO_ZOOM_10.into()),
        user_notes: None,
    }]
}

pub fn note_on_highlight() -> Vec<ItemEdit> {
    vec![ItemEdit::Update {
        id: "item-4".into(),
        kind: None,
        short_description: None,
        long_description: None,
        user_notes: Some("Fill Toronto in gold.".into()),
    }]
}
