//! Geographic value types and their GeoJSON encoding.
//!
//! Internally points are `(lat, lon)`; on the wire geometries follow
//! RFC 7946 and list coordinates as `[lon, lat]`. The swap happens only in
//! this file.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("empty input")]
    EmptyInput,
    #[error("unsupported geometry type `{0}`")]
    Unsupported(String),
    #[error("shape crosses the antimeridian")]
    Antimeridian,
}

/// WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(GeometryError::Invalid(format!(
                "coordinate out of range: lat {} lon {}",
                self.lat, self.lon
            )))
        }
    }

    pub fn lerp(self, other: GeoPoint, f: f64) -> GeoPoint {
        GeoPoint::new(
            self.lat + (other.lat - self.lat) * f,
            self.lon + (other.lon - self.lon) * f,
        )
    }
}

/// Axis-aligned lat/lon box. Antimeridian-crossing boxes are not representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BoundingBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Self {
        Self { min, max }
    }

    /// Smallest box around `points`; `None` when empty.
    pub fn around(points: impl IntoIterator<Item = GeoPoint>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self::new(first, first);
        for p in it {
            b.min.lat = b.min.lat.min(p.lat);
            b.min.lon = b.min.lon.min(p.lon);
            b.max.lat = b.max.lat.max(p.lat);
            b.max.lon = b.max.lon.max(p.lon);
        }
        Some(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.min.validate()?;
        self.max.validate()?;
        if self.min.lat > self.max.lat || self.min.lon > self.max.lon {
            return Err(GeometryError::Invalid(
                "bounding box min exceeds max".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min.lat && p.lat <= self.max.lat && p.lon >= self.min.lon && p.lon <= self.max.lon
    }

    pub fn center(&self) -> GeoPoint {
        self.min.lerp(self.max, 0.5)
    }

    pub fn width(&self) -> f64 {
        self.max.lon - self.min.lon
    }

    pub fn height(&self) -> f64 {
        self.max.lat - self.min.lat
    }
}

/// A closed ring: first vertex repeated as the last.
pub type Ring = Vec<GeoPoint>;

/// Exterior ring followed by zero or more holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Ring>,
}

impl Polygon {
    /// Builds a polygon from an exterior ring, closing it if needed.
    pub fn from_exterior(mut ring: Ring) -> Self {
        close_ring(&mut ring);
        Self { rings: vec![ring] }
    }

    pub fn with_holes(mut exterior: Ring, holes: Vec<Ring>) -> Self {
        close_ring(&mut exterior);
        let mut rings = vec![exterior];
        for mut h in holes {
            close_ring(&mut h);
            rings.push(h);
        }
        Self { rings }
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        self.rings.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn holes(&self) -> &[Ring] {
        if self.rings.is_empty() {
            &[]
        } else {
            &self.rings[1..]
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.rings.is_empty() {
            return Err(GeometryError::Invalid("polygon without rings".into()));
        }
        for ring in &self.rings {
            validate_ring(ring)?;
        }
        Ok(())
    }

    /// Axis-aligned rectangle `[lon0,lon1] x [lat0,lat1]`, counter-clockwise.
    pub fn rect(lon0: f64, lat0: f64, lon1: f64, lat1: f64) -> Self {
        Self::from_exterior(vec![
            GeoPoint::new(lat0, lon0),
            GeoPoint::new(lat0, lon1),
            GeoPoint::new(lat1, lon1),
            GeoPoint::new(lat1, lon0),
        ])
    }
}

pub fn close_ring(ring: &mut Ring) {
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
        }
    }
}

pub fn validate_ring(ring: &[GeoPoint]) -> Result<(), GeometryError> {
    if ring.len() < 4 {
        return Err(GeometryError::Invalid(format!(
            "ring has {} vertices, need at least 4",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(GeometryError::Invalid("ring is not closed".into()));
    }
    ring.iter().try_for_each(GeoPoint::validate)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(GeoPoint),
    Line(Vec<GeoPoint>),
    Polygon(Polygon),
    MultiPolygon(Vec<Polygon>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Point,
    Line,
    Polygon,
    Multipolygon,
}

/// Tagged geometry plus string metadata. Encoded as a GeoJSON Feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoShape {
    pub geometry: Geometry,
    pub properties: BTreeMap<String, String>,
}

impl GeoShape {
    pub fn new(geometry: Geometry) -> Self {
        Self {
            geometry,
            properties: BTreeMap::new(),
        }
    }

    pub fn point(p: GeoPoint) -> Self {
        Self::new(Geometry::Point(p))
    }

    pub fn line(path: Vec<GeoPoint>) -> Self {
        Self::new(Geometry::Line(path))
    }

    pub fn polygon(p: Polygon) -> Self {
        Self::new(Geometry::Polygon(p))
    }

    pub fn multipolygon(ps: Vec<Polygon>) -> Self {
        Self::new(Geometry::MultiPolygon(ps))
    }

    /// The empty areal shape (result of a difference that removes everything).
    pub fn empty() -> Self {
        Self::multipolygon(Vec::new())
    }

    pub fn with_property(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.properties.insert(key.into(), value.into());
        self
    }

    pub fn kind(&self) -> ShapeKind {
        match self.geometry {
            Geometry::Point(_) => ShapeKind::Point,
            Geometry::Line(_) => ShapeKind::Line,
            Geometry::Polygon(_) => ShapeKind::Polygon,
            Geometry::MultiPolygon(_) => ShapeKind::Multipolygon,
        }
    }

    pub fn is_areal(&self) -> bool {
        matches!(self.kind(), ShapeKind::Polygon | ShapeKind::Multipolygon)
    }

    pub fn is_empty(&self) -> bool {
        match &self.geometry {
            Geometry::Point(_) => false,
            Geometry::Line(p) => p.is_empty(),
            Geometry::Polygon(p) => p.exterior().is_empty(),
            Geometry::MultiPolygon(ps) => ps.iter().all(|p| p.exterior().is_empty()),
        }
    }

    /// Polygons making up an areal shape (empty for points and lines).
    pub fn polygons(&self) -> Vec<&Polygon> {
        match &self.geometry {
            Geometry::Polygon(p) => vec![p],
            Geometry::MultiPolygon(ps) => ps.iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn vertices(&self) -> Vec<GeoPoint> {
        match &self.geometry {
            Geometry::Point(p) => vec![*p],
            Geometry::Line(path) => path.clone(),
            Geometry::Polygon(p) => p.rings.iter().flatten().copied().collect(),
            Geometry::MultiPolygon(ps) => ps
                .iter()
                .flat_map(|p| p.rings.iter().flatten().copied())
                .collect(),
        }
    }

    /// Structural validity: coordinate ranges, closed rings with >= 4
    /// vertices, lines with >= 2 vertices.
    pub fn validate(&self) -> Result<(), GeometryError> {
        match &self.geometry {
            Geometry::Point(p) => p.validate(),
            Geometry::Line(path) => {
                if path.len() < 2 {
                    return Err(GeometryError::Invalid(format!(
                        "line has {} vertices, need at least 2",
                        path.len()
                    )));
                }
                path.iter().try_for_each(GeoPoint::validate)
            }
            Geometry::Polygon(p) => p.validate(),
            Geometry::MultiPolygon(ps) => ps.iter().try_for_each(Polygon::validate),
        }
    }

    /// RFC 7946 geometry object.
    pub fn geometry_to_geojson(&self) -> Value {
        let pos = |p: &GeoPoint| json!([p.lon, p.lat]);
        let ring = |r: &Ring| Value::Array(r.iter().map(pos).collect());
        let poly = |p: &Polygon| Value::Array(p.rings.iter().map(ring).collect());
        match &self.geometry {
            Geometry::Point(p) => json!({"type": "Point", "coordinates": pos(p)}),
            Geometry::Line(path) => json!({
                "type": "LineString",
                "coordinates": path.iter().map(pos).collect::<Vec<_>>(),
            }),
            Geometry::Polygon(p) => json!({"type": "Polygon", "coordinates": poly(p)}),
            Geometry::MultiPolygon(ps) => json!({
                "type": "MultiPolygon",
                "coordinates": ps.iter().map(poly).collect::<Vec<_>>(),
            }),
        }
    }

    /// Parses an RFC 7946 geometry object. Only Point, LineString, Polygon and
    /// MultiPolygon are accepted.
    pub fn geometry_from_geojson(value: &Value) -> Result<Geometry, GeometryError> {
        let ty = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| GeometryError::Invalid("geometry without type".into()))?;
        if !matches!(ty, "Point" | "LineString" | "Polygon" | "MultiPolygon") {
            return Err(GeometryError::Unsupported(ty.to_string()));
        }
        let coords = value
            .get("coordinates")
            .ok_or_else(|| GeometryError::Invalid("geometry without coordinates".into()))?;
        match ty {
            "Point" => Ok(Geometry::Point(parse_position(coords)?)),
            "LineString" => Ok(Geometry::Line(parse_positions(coords)?)),
            "Polygon" => Ok(Geometry::Polygon(parse_polygon(coords)?)),
            "MultiPolygon" => {
                let polys = coords
                    .as_array()
                    .ok_or_else(|| GeometryError::Invalid("multipolygon coordinates".into()))?
                    .iter()
                    .map(parse_polygon)
                    .collect::<Result<_, _>>()?;
                Ok(Geometry::MultiPolygon(polys))
            }
            other => Err(GeometryError::Unsupported(other.to_string())),
        }
    }

    /// GeoJSON Feature with the metadata map as `properties`.
    pub fn to_feature(&self) -> Value {
        json!({
            "type": "Feature",
            "geometry": self.geometry_to_geojson(),
            "properties": self.properties,
        })
    }

    /// Accepts either a Feature or a bare geometry object.
    pub fn from_geojson(value: &Value) -> Result<Self, GeometryError> {
        let (geometry, props) = match value.get("type").and_then(Value::as_str) {
            Some("Feature") => {
                let g = value
                    .get("geometry")
                    .ok_or_else(|| GeometryError::Invalid("feature without geometry".into()))?;
                (g, value.get("properties"))
            }
            _ => (value, None),
        };
        let mut properties = BTreeMap::new();
        if let Some(Value::Object(map)) = props {
            for (k, v) in map {
                let s = match v {
                    Value::String(s) => s.clone(),
                    Value::Null => continue,
                    other => other.to_string(),
                };
                properties.insert(k.clone(), s);
            }
        }
        Ok(Self {
            geometry: Self::geometry_from_geojson(geometry)?,
            properties,
        })
    }
}

fn parse_position(v: &Value) -> Result<GeoPoint, GeometryError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| GeometryError::Invalid(format!("bad position {v}")))?;
    let lon = arr[0].as_f64();
    let lat = arr[1].as_f64();
    match (lat, lon) {
        (Some(lat), Some(lon)) => Ok(GeoPoint::new(lat, lon)),
        _ => Err(GeometryError::Invalid(format!("bad position {v}"))),
    }
}

fn parse_positions(v: &Value) -> Result<Vec<GeoPoint>, GeometryError> {
    v.as_array()
        .ok_or_else(|| GeometryError::Invalid("expected position list".into()))?
        .iter()
        .map(parse_position)
        .collect()
}

fn parse_polygon(v: &Value) -> Result<Polygon, GeometryError> {
    let rings = v
        .as_array()
        .ok_or_else(|| GeometryError::Invalid("expected ring list".into()))?
        .iter()
        .map(parse_positions)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon { rings })
}

impl Serialize for GeoShape {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_feature().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeoShape {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        GeoShape::from_geojson(&v).map_err(D::Error::custom)
    }
}
