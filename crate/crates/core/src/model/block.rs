use serde::{Deserialize, Serialize};

use super::geo::{BoundingBox, GeoPoint, GeoShape, GeometryError, ShapeKind};

/// The nine animation techniques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    HighlightArea,
    HighlightLine,
    HighlightPoint,
    CameraZoom,
    CameraTranslate,
    CameraOrbit,
    ElementRoute,
    ElementSpatialTransition,
    ElementAuxiliaryMotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockCategory {
    Highlight,
    Camera,
    Element,
}

impl BlockKind {
    pub const ALL: [BlockKind; 9] = [
        BlockKind::HighlightArea,
        BlockKind::HighlightLine,
        BlockKind::HighlightPoint,
        BlockKind::CameraZoom,
        BlockKind::CameraTranslate,
        BlockKind::CameraOrbit,
        BlockKind::ElementRoute,
        BlockKind::ElementSpatialTransition,
        BlockKind::ElementAuxiliaryMotion,
    ];

    pub fn category(self) -> BlockCategory {
        use BlockKind::*;
        match self {
            HighlightArea | HighlightLine | HighlightPoint => BlockCategory::Highlight,
            CameraZoom | CameraTranslate | CameraOrbit => BlockCategory::Camera,
            ElementRoute | ElementSpatialTransition | ElementAuxiliaryMotion => {
                BlockCategory::Element
            }
        }
    }

    pub fn is_camera(self) -> bool {
        self.category() == BlockCategory::Camera
    }

    pub fn as_str(self) -> &'static str {
        use BlockKind::*;
        match self {
            HighlightArea => "highlight_area",
            HighlightLine => "highlight_line",
            HighlightPoint => "highlight_point",
            CameraZoom => "camera_zoom",
            CameraTranslate => "camera_translate",
            CameraOrbit => "camera_orbit",
            ElementRoute => "element_route",
            ElementSpatialTransition => "element_spatial_transition",
            ElementAuxiliaryMotion => "element_auxiliary_motion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for BlockKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitDirection {
    Cw,
    Ccw,
}

impl OrbitDirection {
    /// Sign applied to the sweep; counter-clockwise increases bearing.
    pub fn sign(self) -> f64 {
        match self {
            OrbitDirection::Ccw => 1.0,
            OrbitDirection::Cw => -1.0,
        }
    }
}

pub const MAX_ZOOM: f64 = 22.0;

/// Kind-specific block arguments. The serialized tag is the block kind, so a
/// block's kind and its arguments cannot disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "snake_case")]
pub enum BlockArgs {
    HighlightArea {
        shape: GeoShape,
    },
    HighlightLine {
        path: GeoShape,
    },
    HighlightPoint {
        point: GeoPoint,
    },
    CameraZoom {
        target: GeoPoint,
        zoom_level: f64,
    },
    CameraTranslate {
        from: GeoPoint,
        to: GeoPoint,
        zoom_level: f64,
    },
    CameraOrbit {
        center: GeoPoint,
        zoom_level: f64,
        sweep: f64,
        direction: OrbitDirection,
        /// Overrides continuing from the previous camera bearing.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start_bearing: Option<f64>,
    },
    ElementRoute {
        path: GeoShape,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sprite: Option<String>,
    },
    ElementSpatialTransition {
        from_shape: GeoShape,
        to_shape: GeoShape,
    },
    ElementAuxiliaryMotion {
        region: BoundingBox,
        cluster_count: u32,
        sprite: String,
        seed: u64,
    },
}

impl BlockArgs {
    pub fn kind(&self) -> BlockKind {
        match self {
            BlockArgs::HighlightArea { .. } => BlockKind::HighlightArea,
            BlockArgs::HighlightLine { .. } => BlockKind::HighlightLine,
            BlockArgs::HighlightPoint { .. } => BlockKind::HighlightPoint,
            BlockArgs::CameraZoom { .. } => BlockKind::CameraZoom,
            BlockArgs::CameraTranslate { .. } => BlockKind::CameraTranslate,
            BlockArgs::CameraOrbit { .. } => BlockKind::CameraOrbit,
            BlockArgs::ElementRoute { .. } => BlockKind::ElementRoute,
            BlockArgs::ElementSpatialTransition { .. } => BlockKind::ElementSpatialTransition,
            BlockArgs::ElementAuxiliaryMotion { .. } => BlockKind::ElementAuxiliaryMotion,
        }
    }

    /// Per-kind invariants; returns every failure found.
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let zoom = |z: f64, errs: &mut Vec<String>| {
            if !(0.0..=MAX_ZOOM).contains(&z) {
                errs.push(format!("zoom_level {z} outside [0, {MAX_ZOOM}]"));
            }
        };
        let point = |name: &str, p: &GeoPoint, errs: &mut Vec<String>| {
            if let Err(e) = p.validate() {
                errs.push(format!("{name}: {e}"));
            }
        };
        let shape = |name: &str, s: &GeoShape, allowed: &[ShapeKind], errs: &mut Vec<String>| {
            if !allowed.contains(&s.kind()) {
                errs.push(format!("{name} must be {allowed:?}, got {:?}", s.kind()));
            } else if let Err(e) = s.validate() {
                errs.push(format!("{name}: {e}"));
            }
        };
        match self {
            BlockArgs::HighlightArea { shape: s } => shape(
                "shape",
                s,
                &[ShapeKind::Polygon, ShapeKind::Multipolygon],
                &mut errs,
            ),
            BlockArgs::HighlightLine { path } => shape("path", path, &[ShapeKind::Line], &mut errs),
            BlockArgs::HighlightPoint { point: p } => point("point", p, &mut errs),
            BlockArgs::CameraZoom { target, zoom_level } => {
                point("target", target, &mut errs);
                zoom(*zoom_level, &mut errs);
            }
            BlockArgs::CameraTranslate {
                from,
                to,
                zoom_level,
            } => {
                point("from", from, &mut errs);
                point("to", to, &mut errs);
                zoom(*zoom_level, &mut errs);
            }
            BlockArgs::CameraOrbit {
                center,
                zoom_level,
                sweep,
                start_bearing,
                ..
            } => {
                point("center", center, &mut errs);
                zoom(*zoom_level, &mut errs);
                if *sweep == 0.0 || !sweep.is_finite() {
                    errs.push("orbit sweep must be non-zero".into());
                }
                if let Some(b) = start_bearing {
                    if !b.is_finite() {
                        errs.push("start_bearing must be finite".into());
                    }
                }
            }
            BlockArgs::ElementRoute { path, .. } => {
                shape("path", path, &[ShapeKind::Line], &mut errs)
            }
            BlockArgs::ElementSpatialTransition {
                from_shape,
                to_shape,
            } => {
                let areal = [ShapeKind::Polygon, ShapeKind::Multipolygon];
                shape("from_shape", from_shape, &areal, &mut errs);
                shape("to_shape", to_shape, &areal, &mut errs);
            }
            BlockArgs::ElementAuxiliaryMotion {
                region,
                cluster_count,
                ..
            } => {
                if let Err(e) = region.validate() {
                    errs.push(format!("region: {e}"));
                }
                if *cluster_count < 1 {
                    errs.push("cluster_count must be >= 1".into());
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let errs = self.check();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(GeometryError::Invalid(errs.join("; ")))
        }
    }
}

/// Presentation overrides set from the properties panel or by the researcher.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StyleOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl StyleOverrides {
    pub fn opacity_or_default(&self) -> f64 {
        self.opacity.unwrap_or(1.0)
    }
}

/// One timed animation unit. Active on the half-open interval `[start_time, end_time)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationBlock {
    pub id: String,
    #[serde(serialize_with = "crate::canonical::serialize_millis")]
    pub start_time: f64,
    #[serde(serialize_with = "crate::canonical::serialize_millis")]
    pub end_time: f64,
    #[serde(flatten)]
    pub args: BlockArgs,
    #[serde(default)]
    pub style: StyleOverrides,
}

impl AnimationBlock {
    pub fn new(id: impl Into<String>, start_time: f64, end_time: f64, args: BlockArgs) -> Self {
        Self {
            id: id.into(),
            start_time,
            end_time,
            args,
            style: StyleOverrides::default(),
        }
    }

    pub fn kind(&self) -> BlockKind {
        self.args.kind()
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        self.start_time <= t && t < self.end_time
    }

    pub fn overlaps(&self, other: &AnimationBlock) -> bool {
        self.start_time < other.end_time && other.start_time < self.end_time
    }

    /// Progress in `[0, 1]` of `t` through this block.
    pub fn local_progress(&self, t: f64) -> f64 {
        let d = self.duration();
        if d <= 0.0 {
            return 1.0;
        }
        ((t - self.start_time) / d).clamp(0.0, 1.0)
    }

    /// Every invariant failure of this block in isolation.
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.id.is_empty() {
            errs.push("empty block id".into());
        }
        if !self.start_time.is_finite() || self.start_time < 0.0 {
            errs.push(format!("start_time {} must be >= 0", self.start_time));
        }
        if !self.end_time.is_finite() || self.end_time <= self.start_time {
            errs.push(format!(
                "end_time {} must exceed start_time {}",
                self.end_time, self.start_time
            ));
        }
        if let Some(o) = self.style.opacity {
            if !(0.0..=1.0).contains(&o) {
                errs.push(format!("opacity {o} outside [0, 1]"));
            }
        }
        errs.extend(self.args.check());
        errs
    }
}
