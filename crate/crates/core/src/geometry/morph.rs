//! Polygon-to-polygon morphing.
//!
//! Both outlines are resampled to the same vertex count by uniform arc
//! length (planar lon/lat), the target is rotated to the index offset that
//! minimizes the summed squared vertex distance, and intermediate shapes
//! interpolate each vertex pair linearly. For multipolygons only the largest
//! ring morphs; the remaining rings are returned separately so the caller
//! can fade them.

use crate::model::{GeoPoint, GeoShape, GeometryError, Polygon, Ring};

use super::measure::{area, signed_area_deg2};

pub const MIN_MORPH_VERTICES: usize = 64;

/// Two resampled rings of equal length with the target's best rotation applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RingCorrespondence {
    /// Open ring (no repeated closing vertex), `n` points.
    pub source: Vec<GeoPoint>,
    /// Open ring aligned so `target[i]` pairs with `source[i]`.
    pub target: Vec<GeoPoint>,
    /// Index rotation applied to the resampled target.
    pub offset: usize,
}

impl RingCorrespondence {
    pub fn build(a: &[GeoPoint], b: &[GeoPoint]) -> Result<Self, GeometryError> {
        let a = oriented_ccw(a)?;
        let b = oriented_ccw(b)?;
        let n = MIN_MORPH_VERTICES.max(a.len() - 1).max(b.len() - 1);
        let source = resample_open(&a, n);
        let resampled_target = resample_open(&b, n);
        let offset = best_offset(&source, &resampled_target);
        let target = (0..n).map(|i| resampled_target[(i + offset) % n]).collect();
        Ok(Self {
            source,
            target,
            offset,
        })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Closed ring at `fraction` (clamped to `[0, 1]`).
    pub fn at(&self, fraction: f64) -> Ring {
        let f = fraction.clamp(0.0, 1.0);
        let mut ring: Ring = self
            .source
            .iter()
            .zip(&self.target)
            .map(|(a, b)| {
                // (1-f)a + fb hits both endpoints exactly.
                GeoPoint::new(
                    (1.0 - f) * a.lat + f * b.lat,
                    (1.0 - f) * a.lon + f * b.lon,
                )
            })
            .collect();
        ring.push(ring[0]);
        ring
    }

    /// Closed resampled source ring.
    pub fn source_ring(&self) -> Ring {
        close(self.source.clone())
    }

    pub fn target_ring(&self) -> Ring {
        close(self.target.clone())
    }
}

fn close(mut r: Ring) -> Ring {
    if let Some(&first) = r.first() {
        r.push(first);
    }
    r
}

/// Closed counter-clockwise ring resampled to `n` distinct vertices by
/// uniform arc length, starting at the ring's first vertex. This is the
/// outline a morph starts from (fraction 0).
pub fn resample_ring(ring: &[GeoPoint], n: usize) -> Ring {
    let mut r = ring.to_vec();
    if signed_area_deg2(&r) < 0.0 {
        r.reverse();
    }
    close(resample_open(&r, n))
}

fn resample_open(ring: &[GeoPoint], n: usize) -> Vec<GeoPoint> {
    let seg_len: Vec<f64> = ring
        .windows(2)
        .map(|w| (w[1].lat - w[0].lat).hypot(w[1].lon - w[0].lon))
        .collect();
    let total: f64 = seg_len.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while seg + 1 < seg_len.len() && seg_start + seg_len[seg] < target {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let t = if seg_len[seg] > 0.0 {
            ((target - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(if t == 0.0 {
            ring[seg]
        } else {
            ring[seg].lerp(ring[seg + 1], t)
        });
    }
    out
}

fn best_offset(a: &[GeoPoint], b: &[GeoPoint]) -> usize {
    let n = a.len();
    let mut best = (f64::INFINITY, 0);
    for k in 0..n {
        let mut sum = 0.0;
        for i in 0..n {
            let q = b[(i + k) % n];
            sum += (a[i].lat - q.lat).powi(2) + (a[i].lon - q.lon).powi(2);
            if sum >= best.0 {
                break;
            }
        }
        if sum < best.0 {
            best = (sum, k);
        }
    }
    best.1
}

fn oriented_ccw(ring: &[GeoPoint]) -> Result<Vec<GeoPoint>, GeometryError> {
    crate::model::geo::validate_ring(ring)?;
    let a = signed_area_deg2(ring);
    if a.abs() < 1e-14 {
        return Err(GeometryError::Invalid("degenerate ring (zero area)".into()));
    }
    let mut r = ring.to_vec();
    if a < 0.0 {
        r.reverse();
    }
    Ok(r)
}

/// Splits an areal shape into its largest-area polygon exterior and the rest.
fn main_ring(shape: &GeoShape) -> Result<(Ring, Vec<Polygon>), GeometryError> {
    if !shape.is_areal() {
        return Err(GeometryError::Invalid(format!(
            "morph needs polygons, got {:?}",
            shape.kind()
        )));
    }
    shape.validate()?;
    let polys = shape.polygons();
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in polys.iter().enumerate() {
        let a = area(&GeoShape::polygon((*p).clone()))?;
        if best.is_none_or(|(ba, _)| a > ba) {
            best = Some((a, i));
        }
    }
    let (_, idx) = best.ok_or(GeometryError::EmptyInput)?;
    let rest = polys
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, p)| (*p).clone())
        .collect();
    Ok((polys[idx].exterior().to_vec(), rest))
}

/// A prepared morph between two areal shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphPlan {
    pub correspondence: RingCorrespondence,
    /// Non-main polygons of the source; fade out.
    pub source_rest: Vec<Polygon>,
    /// Non-main polygons of the target; fade in.
    pub target_rest: Vec<Polygon>,
}

/// One interpolated state of a [`MorphPlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct MorphFrame {
    pub shape: GeoShape,
    /// Polygons fading alongside the main ring, with their opacity factor.
    pub residuals: Vec<(Polygon, f64)>,
}

impl MorphPlan {
    pub fn new(a: &GeoShape, b: &GeoShape) -> Result<Self, GeometryError> {
        let (ra, rest_a) = main_ring(a)?;
        let (rb, rest_b) = main_ring(b)?;
        Ok(Self {
            correspondence: RingCorrespondence::build(&ra, &rb)?,
            source_rest: rest_a,
            target_rest: rest_b,
        })
    }

    pub fn at(&self, fraction: f64) -> MorphFrame {
        let f = fraction.clamp(0.0, 1.0);
        let shape = GeoShape::polygon(Polygon {
            rings: vec![self.correspondence.at(f)],
        });
        let residuals = self
            .source_rest
            .iter()
            .map(|p| (p.clone(), 1.0 - f))
            .chain(self.target_rest.iter().map(|p| (p.clone(), f)))
            .collect();
        MorphFrame { shape, residuals }
    }
}

/// Shape at `fraction` of the way from `a` to `b`.
pub fn morph(a: &GeoShape, b: &GeoShape, fraction: f64) -> Result<GeoShape, GeometryError> {
    Ok(MorphPlan::new(a, b)?.at(fraction).shape)
}

/// Discrete Hausdorff distance between two vertex sets, in degrees.
pub fn hausdorff_deg(a: &[GeoPoint], b: &[GeoPoint]) -> f64 {
    let directed = |x: &[GeoPoint], y: &[GeoPoint]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| (p.lat - q.lat).hypot(p.lon - q.lon))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}
