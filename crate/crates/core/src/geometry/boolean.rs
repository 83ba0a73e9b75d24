//! Union and difference of areal shapes.
//!
//! Computation is planar in lon/lat. Before the overlay, vertices of later
//! inputs are snapped onto nearby vertices or edges of earlier inputs within
//! [`SNAP_TOLERANCE_DEG`], so administrative boundaries fetched separately
//! (matching but not bit-identical borders) merge cleanly. The overlay
//! itself is delegated to `geo`'s `BooleanOps`.

use geo::BooleanOps;

use crate::model::{GeoPoint, GeoShape, GeometryError, Polygon};

use super::measure::signed_area_deg2;

/// About 1 cm on the ground.
pub const SNAP_TOLERANCE_DEG: f64 = 1e-7;

/// Pieces smaller than this (square degrees) are overlay noise.
const SLIVER_AREA_DEG2: f64 = 1e-12;

/// Union of one or more polygons/multipolygons.
pub fn union(shapes: &[GeoShape]) -> Result<GeoShape, GeometryError> {
    if shapes.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let mut inputs = shapes
        .iter()
        .map(prepared_polygons)
        .collect::<Result<Vec<_>, _>>()?;
    snap_inputs(&mut inputs);
    let mut acc = to_geo(&inputs[0]);
    for next in &inputs[1..] {
        acc = acc.union(&to_geo(next));
    }
    // A single input still goes through the overlay so its rings come out normalized.
    if inputs.len() == 1 {
        acc = acc.union(&geo::MultiPolygon::new(Vec::new()));
    }
    Ok(from_geo(&acc))
}

/// `shape` minus `mask`. May be empty.
pub fn difference(shape: &GeoShape, mask: &GeoShape) -> Result<GeoShape, GeometryError> {
    let mut inputs = vec![prepared_polygons(shape)?, prepared_polygons(mask)?];
    snap_inputs(&mut inputs);
    let out = to_geo(&inputs[0]).difference(&to_geo(&inputs[1]));
    Ok(from_geo(&out))
}

fn prepared_polygons(shape: &GeoShape) -> Result<Vec<Polygon>, GeometryError> {
    if !shape.is_areal() {
        return Err(GeometryError::Invalid(format!(
            "boolean operations need polygons, got {:?}",
            shape.kind()
        )));
    }
    shape.validate()?;
    let polys: Vec<Polygon> = shape.polygons().into_iter().cloned().collect();
    for p in &polys {
        check_antimeridian(p)?;
    }
    Ok(polys)
}

/// Rejects rings with an edge spanning more than 180 degrees of longitude.
pub fn check_antimeridian(poly: &Polygon) -> Result<(), GeometryError> {
    for ring in &poly.rings {
        if ring.windows(2).any(|w| (w[1].lon - w[0].lon).abs() > 180.0) {
            return Err(GeometryError::Antimeridian);
        }
    }
    Ok(())
}

/// Snaps every vertex of input `k` onto the closest vertex of inputs `< k`
/// within tolerance, or failing that onto the closest edge.
fn snap_inputs(inputs: &mut [Vec<Polygon>]) {
    let tol = SNAP_TOLERANCE_DEG;
    for k in 1..inputs.len() {
        let (done, rest) = inputs.split_at_mut(k);
        let reference: Vec<&[GeoPoint]> = done
            .iter()
            .flatten()
            .flat_map(|p| p.rings.iter().map(Vec::as_slice))
            .collect();
        let bounds: Vec<(GeoPoint, GeoPoint)> = reference
            .iter()
            .map(|r| ring_bounds(r, tol))
            .collect();
        for poly in rest[0].iter_mut() {
            for ring in poly.rings.iter_mut() {
                for v in ring.iter_mut() {
                    if let Some(s) = snap_point(*v, &reference, &bounds, tol) {
                        *v = s;
                    }
                }
            }
        }
    }
}

fn ring_bounds(ring: &[GeoPoint], pad: f64) -> (GeoPoint, GeoPoint) {
    let mut lo = GeoPoint::new(f64::INFINITY, f64::INFINITY);
    let mut hi = GeoPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in ring {
        lo.lat = lo.lat.min(p.lat);
        lo.lon = lo.lon.min(p.lon);
        hi.lat = hi.lat.max(p.lat);
        hi.lon = hi.lon.max(p.lon);
    }
    (
        GeoPoint::new(lo.lat - pad, lo.lon - pad),
        GeoPoint::new(hi.lat + pad, hi.lon + pad),
    )
}

fn snap_point(
    v: GeoPoint,
    rings: &[&[GeoPoint]],
    bounds: &[(GeoPoint, GeoPoint)],
    tol: f64,
) -> Option<GeoPoint> {
    let tol2 = tol * tol;
    let mut best_vertex: Option<(f64, GeoPoint)> = None;
    let mut best_edge: Option<(f64, GeoPoint)> = None;
    for (ring, (lo, hi)) in rings.iter().zip(bounds) {
        if v.lat < lo.lat || v.lat > hi.lat || v.lon < lo.lon || v.lon > hi.lon {
            continue;
        }
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            let da = dist2(v, a);
            if da <= tol2 && best_vertex.is_none_or(|(d, _)| da < d) {
                best_vertex = Some((da, a));
            }
            let (d, proj) = segment_projection(v, a, b);
            if d <= tol2 && best_edge.is_none_or(|(bd, _)| d < bd) {
                best_edge = Some((d, proj));
            }
        }
    }
    best_vertex.or(best_edge).map(|(_, p)| p)
}

fn dist2(a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lat - b.lat).powi(2) + (a.lon - b.lon).powi(2)
}

fn segment_projection(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> (f64, GeoPoint) {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a.lerp(b, t);
    (dist2(p, q), q)
}

fn to_geo(polys: &[Polygon]) -> geo::MultiPolygon<f64> {
    let ring = |r: &Vec<GeoPoint>| {
        geo::LineString::from(
            r.iter()
                .map(|p| geo::Coord { x: p.lon, y: p.lat })
                .collect::<Vec<_>>(),
        )
    };
    geo::MultiPolygon::new(
        polys
            .iter()
            .map(|p| {
                let mut rings = p.rings.iter().map(ring);
                let exterior = rings.next().unwrap_or_else(|| geo::LineString::new(vec![]));
                geo::Polygon::new(exterior, rings.collect())
            })
            .collect(),
    )
}

fn from_geo(mp: &geo::MultiPolygon<f64>) -> GeoShape {
    let ring = |ls: &geo::LineString<f64>| -> Vec<GeoPoint> {
        let mut r: Vec<GeoPoint> = ls.0.iter().map(|c| GeoPoint::new(c.y, c.x)).collect();
        crate::model::geo::close_ring(&mut r);
        r
    };
    let polys: Vec<Polygon> = mp
        .0
        .iter()
        .filter_map(|p| {
            let exterior = ring(p.exterior());
            if exterior.len() < 4 || signed_area_deg2(&exterior).abs() < SLIVER_AREA_DEG2 {
                return None;
            }
            let holes = p
                .interiors()
                .iter()
                .map(ring)
                .filter(|h| h.len() >= 4 && signed_area_deg2(h).abs() >= SLIVER_AREA_DEG2)
                .collect();
            Some(Polygon::with_holes(exterior, holes))
        })
        .collect();
    match polys.len() {
        1 => GeoShape::polygon(polys.into_iter().next().expect("one polygon")),
        _ => GeoShape::multipolygon(polys),
    }
}
