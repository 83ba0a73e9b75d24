//! System prompts, shipped as text resources. Any edit changes the prompt
//! hash recorded in fixtures, so replay fails until fixtures are re-recorded.

use storymap_core::BlockKind;

pub const BREAKDOWN: &str = include_str!("../prompts/breakdown.txt");
pub const RESEARCHER: &str = include_str!("../prompts/researcher.txt");

pub fn researcher_for(kind: BlockKind) -> String {
    let guidance = match kind {
        BlockKind::HighlightArea => include_str!("../prompts/research/highlight_area.txt"),
        BlockKind::HighlightLine => include_str!("../prompts/research/highlight_line.txt"),
        BlockKind::HighlightPoint => include_str!("../prompts/research/highlight_point.txt"),
        BlockKind::CameraZoom => include_str!("../prompts/research/camera_zoom.txt"),
        BlockKind::CameraTranslate => include_str!("../prompts/research/camera_translate.txt"),
        BlockKind::CameraOrbit => include_str!("../prompts/research/camera_orbit.txt"),
        BlockKind::ElementRoute => include_str!("../prompts/research/element_route.txt"),
        BlockKind::ElementSpatialTransition => {
            include_str!("../prompts/research/element_spatial_transition.txt")
        }
        BlockKind::ElementAuxiliaryMotion => {
            include_str!("../prompts/research/element_auxiliary_motion.txt")
        }
    };
    format!("{RESEARCHER}\n{guidance}")
}
