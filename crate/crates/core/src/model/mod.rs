//! The timeline document and everything stored in it.

pub mod block;
pub mod breakdown;
pub mod geo;
pub mod project;
pub mod session;
pub mod timeline;

pub use block::{
    AnimationBlock, BlockArgs, BlockCategory, BlockKind, OrbitDirection, StyleOverrides, MAX_ZOOM,
};
pub use breakdown::{script_hash, SceneBreakdown, SceneBreakdownItem};
pub use geo::{BoundingBox, GeoPoint, GeoShape, Geometry, GeometryError, Polygon, Ring, ShapeKind};
pub use project::{Asset, DocumentError, Project};
pub use session::{
    ChatMessage, GeoAction, GeocodeRequest, ResearchSession, Role, TravelMode,
};
pub use timeline::{
    apply_edit, validate_timeline, validate_timeline_with, Edit, EditError, MapStyle, Severity,
    Timeline, ValidationOptions, ValidationReport, Violation, ViolationCode,
};
