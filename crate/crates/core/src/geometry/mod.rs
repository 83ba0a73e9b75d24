//! Coordinate math: boolean operations, morphing, path parameterization,
//! area and extent.

pub mod boolean;
pub mod measure;
pub mod morph;
pub mod path;
pub mod sphere;

pub use crate::model::{BoundingBox, GeometryError};
pub use boolean::{difference, union, SNAP_TOLERANCE_DEG};
pub use measure::{area, contains, extent, polygon_contains, signed_area_deg2};
pub use morph::{hausdorff_deg, morph, resample_ring, MorphFrame, MorphPlan, RingCorrespondence};
pub use path::{cumulative_lengths, path_length_km, point_along};
pub use sphere::{bearing, haversine, normalize_degrees, EqualAreaProjection, EARTH_RADIUS_KM};
