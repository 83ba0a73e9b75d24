//! Area, extent, centroid and point containment.
//!
//! Areas and centroids are computed on a Lambert azimuthal equal-area
//! projection centred on the shape's bounding box. Edges are treated as
//! straight in lon/lat (the same model the boolean operations use) and are
//! densified before projection so the projected polygon follows them.

use crate::model::{BoundingBox, GeoPoint, GeoShape, Geometry, GeometryError, Polygon};

use super::path::point_along;
use super::sphere::EqualAreaProjection;

/// Longest edge step, in degrees, before projection.
const DENSIFY_STEP_DEG: f64 = 0.05;

fn areal_polygons(shape: &GeoShape) -> Result<Vec<&Polygon>, GeometryError> {
    match &shape.geometry {
        Geometry::Polygon(p) => Ok(vec![p]),
        Geometry::MultiPolygon(ps) => Ok(ps.iter().collect()),
        _ => Err(GeometryError::Invalid(format!(
            "expected polygon or multipolygon, got {:?}",
            shape.kind()
        ))),
    }
}

fn densified(ring: &[GeoPoint]) -> impl Iterator<Item = GeoPoint> + '_ {
    ring.windows(2).flat_map(|w| {
        let (a, b) = (w[0], w[1]);
        let span = (b.lat - a.lat).abs().max((b.lon - a.lon).abs());
        let steps = ((span / DENSIFY_STEP_DEG).ceil() as usize).max(1);
        (0..steps).map(move |i| a.lerp(b, i as f64 / steps as f64))
    })
}

/// Signed area and first moments of a projected ring (shoelace).
fn ring_moments(proj: &EqualAreaProjection, ring: &[GeoPoint]) -> (f64, f64, f64) {
    let pts: Vec<(f64, f64)> = densified(ring).map(|p| proj.forward(p)).collect();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..pts.len() {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % pts.len()];
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    (a / 2.0, cx / 6.0, cy / 6.0)
}

fn projection_for(points: impl IntoIterator<Item = GeoPoint>) -> Option<EqualAreaProjection> {
    BoundingBox::around(points).map(|b| EqualAreaProjection::new(b.center()))
}

/// Polygon moments (area, sum x·A, sum y·A) with holes subtracted,
/// independent of ring orientation.
fn polygon_moments(proj: &EqualAreaProjection, poly: &Polygon) -> (f64, f64, f64) {
    let mut total = (0.0, 0.0, 0.0);
    for (i, ring) in poly.rings.iter().enumerate() {
        let (a, mx, my) = ring_moments(proj, ring);
        // Normalize each ring to positive orientation, then subtract holes.
        let sign = if a < 0.0 { -1.0 } else { 1.0 } * if i == 0 { 1.0 } else { -1.0 };
        total.0 += sign * a;
        total.1 += sign * mx;
        total.2 += sign * my;
    }
    total
}

/// Area in square kilometers. Holes subtract; orientation is irrelevant.
pub fn area(shape: &GeoShape) -> Result<f64, GeometryError> {
    let polys = areal_polygons(shape)?;
    for p in &polys {
        p.validate()?;
    }
    let Some(proj) = projection_for(shape.vertices()) else {
        return Ok(0.0);
    };
    let a: f64 = polys.iter().map(|p| polygon_moments(&proj, p).0).sum();
    Ok(a.max(0.0))
}

/// Planar signed area of a ring in square degrees (positive = counter-clockwise).
pub fn signed_area_deg2(ring: &[GeoPoint]) -> f64 {
    let mut a = 0.0;
    for w in ring.windows(2) {
        a += w[0].lon * w[1].lat - w[1].lon * w[0].lat;
    }
    a / 2.0
}

/// Bounding box and centroid. Polygon centroids are area weighted, line
/// centroids are the arc-length midpoint, a point is its own centroid.
pub fn extent(shape: &GeoShape) -> Result<(BoundingBox, GeoPoint), GeometryError> {
    let vertices = shape.vertices();
    let bbox = BoundingBox::around(vertices.iter().copied()).ok_or(GeometryError::EmptyInput)?;
    let centroid = match &shape.geometry {
        Geometry::Point(p) => *p,
        Geometry::Line(path) => {
            if path.len() < 2 {
                path[0]
            } else {
                point_along(path, 0.5).0
            }
        }
        Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
            let proj = EqualAreaProjection::new(bbox.center());
            let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
            for p in shape.polygons() {
                let m = polygon_moments(&proj, p);
                a += m.0;
                mx += m.1;
                my += m.2;
            }
            if a.abs() < 1e-12 {
                mean_point(&vertices)
            } else {
                proj.inverse(mx / a, my / a)
            }
        }
    };
    Ok((bbox, centroid))
}

fn mean_point(points: &[GeoPoint]) -> GeoPoint {
    let n = points.len() as f64;
    GeoPoint::new(
        points.iter().map(|p| p.lat).sum::<f64>() / n,
        points.iter().map(|p| p.lon).sum::<f64>() / n,
    )
}

/// Even-odd containment in lon/lat. Points and lines contain nothing.
pub fn contains(shape: &GeoShape, p: GeoPoint) -> bool {
    shape.polygons().iter().any(|poly| polygon_contains(poly, p))
}

pub fn polygon_contains(poly: &Polygon, p: GeoPoint) -> bool {
    let mut inside = false;
    for ring in &poly.rings {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}
