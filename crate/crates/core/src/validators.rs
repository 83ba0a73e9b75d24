//! Grading checks for resolved blocks: camera framing and route fidelity.

use serde::{Deserialize, Serialize};

use crate::geometry::sphere::{haversine, EARTH_RADIUS_KM};
use crate::model::{AnimationBlock, BlockArgs, GeoPoint};

/// Route samples are taken at most this far apart along the checked line.
const SAMPLE_SPACING_KM: f64 = 0.5;

/// Tolerance for route fidelity checks.
pub const ROUTE_TOLERANCE_KM: f64 = 1.0;

/// Symmetric maximum pointwise deviation, in kilometers, between two
/// polylines whose segments are straight in lat/lon.
///
/// Each line is sampled densely along its segments and every sample is
/// measured against the nearest segment of the other line.
pub fn route_deviation_km(route: &[GeoPoint], reference: &[GeoPoint]) -> f64 {
    directed_deviation(route, reference).max(directed_deviation(reference, route))
}

fn directed_deviation(from: &[GeoPoint], to: &[GeoPoint]) -> f64 {
    densify(from)
        .map(|p| distance_to_polyline_km(p, to))
        .fold(0.0, f64::max)
}

fn densify(path: &[GeoPoint]) -> impl Iterator<Item = GeoPoint> + '_ {
    let tail = path.last().copied();
    path.windows(2)
        .flat_map(|w| {
            let steps = ((haversine(w[0], w[1]) / SAMPLE_SPACING_KM).ceil() as usize).max(1);
            (0..steps).map(move |i| w[0].lerp(w[1], i as f64 / steps as f64))
        })
        .chain(tail)
}

/// Distance from `p` to the nearest segment of `path`, measured in a local
/// equirectangular frame centred on `p` (accurate for small distances).
pub fn distance_to_polyline_km(p: GeoPoint, path: &[GeoPoint]) -> f64 {
    if path.len() == 1 {
        return haversine(p, path[0]);
    }
    let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    let kx = k * p.lat.to_radians().cos();
    let local = |q: GeoPoint| ((q.lon - p.lon) * kx, (q.lat - p.lat) * k);
    path.windows(2)
        .map(|w| {
            let (ax, ay) = local(w[0]);
            let (bx, by) = local(w[1]);
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (ax + t * dx).hypot(ay + t * dy)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of one grading check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub passed: bool,
    pub detail: String,
}

/// Route check: the resolved line stays within `tolerance_km` of the reference.
pub fn grade_route(route: &[GeoPoint], reference: &[GeoPoint], tolerance_km: f64) -> Grade {
    let d = route_deviation_km(route, reference);
    Grade {
        passed: d < tolerance_km,
        detail: format!("max deviation {d:.3} km (tolerance {tolerance_km} km)"),
    }
}

/// Camera check: correct location (within `max_km`) and zoom level
/// (within `zoom_tolerance`) at the end of a camera block.
pub fn grade_camera(
    block: &AnimationBlock,
    expected_center: GeoPoint,
    expected_zoom: f64,
    max_km: f64,
    zoom_tolerance: f64,
) -> Grade {
    let (center, zoom) = match &block.args {
        BlockArgs::CameraZoom { target, zoom_level } => (*target, *zoom_level),
        BlockArgs::CameraTranslate { to, zoom_level, .. } => (*to, *zoom_level),
        BlockArgs::CameraOrbit {
            center, zoom_level, ..
        } => (*center, *zoom_level),
        other => {
            return Grade {
                passed: false,
                detail: format!("{} is not a camera block", other.kind()),
            }
        }
    };
    let d = haversine(center, expected_center);
    let dz = (zoom - expected_zoom).abs();
    Grade {
        passed: d <= max_km && dz <= zoom_tolerance,
        detail: format!("center off by {d:.3} km, zoom off by {dz:.2}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_routes_have_zero_deviation() {
        let r = [GeoPoint::new(51.5, -0.1), GeoPoint::new(50.0, -10.0)];
        assert!(route_deviation_km(&r, &r) < 1e-9);
    }

    #[test]
    fn parallel_offset_is_measured() {
        // 0.01 deg of latitude is about 1.112 km.
        let a = [GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 1.0)];
        let b = [GeoPoint::new(0.01, 0.0), GeoPoint::new(0.01, 1.0)];
        let d = route_deviation_km(&a, &b);
        let expected = haversine(GeoPoint::new(0.0, 0.5), GeoPoint::new(0.01, 0.5));
        assert!((d - expected).abs() < 1e-3, "{d} vs {expected}");
        assert!(!grade_route(&a, &b, ROUTE_TOLERANCE_KM).passed);
    }

    #[test]
    fn extra_reference_vertices_on_the_line_do_not_count() {
        let a = [GeoPoint::new(10.0, 10.0), GeoPoint::new(12.0, 14.0)];
        let b = [a[0], a[0].lerp(a[1], 0.3), a[0].lerp(a[1], 0.8), a[1]];
        assert!(route_deviation_km(&a, &b) < 1e-6);
    }

    #[test]
    fn truncated_route_fails() {
        let reference = [GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 1.0)];
        let short = [GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 0.9)];
        assert!(route_deviation_km(&short, &reference) > 10.0);
    }

    #[test]
    fn camera_grading() {
        let b = AnimationBlock::new(
            "z",
            0.0,
            1.0,
            BlockArgs::CameraZoom {
                target: GeoPoint::new(51.5074, -0.1278),
                zoom_level: 10.0,
            },
        );
        assert!(grade_camera(&b, GeoPoint::new(51.51, -0.13), 10.5, 5.0, 1.0).passed);
        assert!(!grade_camera(&b, GeoPoint::new(43.65, -79.38), 10.0, 5.0, 1.0).passed);
        assert!(!grade_camera(&b, GeoPoint::new(51.51, -0.13), 4.0, 5.0, 1.0).passed);
    }
}
