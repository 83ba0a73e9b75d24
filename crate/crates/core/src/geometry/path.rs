use crate::model::GeoPoint;

use super::sphere::{bearing, haversine};

/// Cumulative haversine distance at each vertex of `path`, in kilometers.
pub fn cumulative_lengths(path: &[GeoPoint]) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in path.windows(2) {
        acc += haversine(w[0], w[1]);
        out.push(acc);
    }
    out
}

pub fn path_length_km(path: &[GeoPoint]) -> f64 {
    path.windows(2).map(|w| haversine(w[0], w[1])).sum()
}

/// Position at arc-length `fraction` of `path` and the forward bearing of
/// the segment it falls on. Fractions outside `[0, 1]` are clamped.
///
/// Segment lengths are great-circle distances; the position inside a
/// segment is linear in lat/lon.
pub fn point_along(path: &[GeoPoint], fraction: f64) -> (GeoPoint, f64) {
    let cum = cumulative_lengths(path);
    point_along_with(path, &cum, fraction)
}

/// [`point_along`] with precomputed [`cumulative_lengths`].
pub fn point_along_with(path: &[GeoPoint], cum: &[f64], fraction: f64) -> (GeoPoint, f64) {
    assert!(!path.is_empty(), "point_along on an empty path");
    let f = if fraction.is_nan() {
        0.0
    } else {
        fraction.clamp(0.0, 1.0)
    };
    if path.len() == 1 {
        return (path[0], 0.0);
    }
    let total = *cum.last().unwrap_or(&0.0);
    let heading_of = |i: usize| segment_heading(path, i);
    if f <= 0.0 || total <= 0.0 {
        return (path[0], heading_of(0));
    }
    if f >= 1.0 {
        let last = path.len() - 1;
        return (path[last], heading_of(last - 1));
    }
    let target = f * total;
    // First segment whose end reaches the target.
    let seg = cum[1..]
        .partition_point(|&c| c < target)
        .min(path.len() - 2);
    let len = cum[seg + 1] - cum[seg];
    let local = if len > 0.0 {
        ((target - cum[seg]) / len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (path[seg].lerp(path[seg + 1], local), heading_of(seg))
}

/// Bearing of segment `i`, falling back to neighbours for zero-length segments.
fn segment_heading(path: &[GeoPoint], i: usize) -> f64 {
    let n = path.len();
    let nonzero = |j: usize| path[j] != path[j + 1];
    if nonzero(i) {
        return bearing(path[i], path[i + 1]);
    }
    (i + 1..n - 1)
        .chain((0..i).rev())
        .find(|&j| nonzero(j))
        .map(|j| bearing(path[j], path[j + 1]))
        .unwrap_or(0.0)
}

/// The prefix of `path` up to `fraction`, ending exactly at the head position.
pub fn path_prefix(path: &[GeoPoint], cum: &[f64], fraction: f64) -> Vec<GeoPoint> {
    let (head, _) = point_along_with(path, cum, fraction);
    let total = *cum.last().unwrap_or(&0.0);
    let target = fraction.clamp(0.0, 1.0) * total;
    let mut out: Vec<GeoPoint> = path
        .iter()
        .zip(cum)
        .take_while(|(_, &c)| c < target)
        .map(|(p, _)| *p)
        .collect();
    if out.is_empty() {
        out.push(path[0]);
    }
    out.push(head);
    out
}
