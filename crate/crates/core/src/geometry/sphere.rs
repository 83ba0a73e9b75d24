//! Spherical distance, bearing, and the local equal-area projection.

use crate::model::GeoPoint;

/// Mean Earth radius (IUGG), kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in kilometers.
pub fn haversine(p: GeoPoint, q: GeoPoint) -> f64 {
    let (phi1, phi2) = (p.lat.to_radians(), q.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (q.lon - p.lon).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `p` to `q`, degrees in `[0, 360)`.
pub fn bearing(p: GeoPoint, q: GeoPoint) -> f64 {
    let (phi1, phi2) = (p.lat.to_radians(), q.lat.to_radians());
    let dlambda = (q.lon - p.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    normalize_degrees(y.atan2(x).to_degrees())
}

/// Maps any angle into `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Lambert azimuthal equal-area projection on the sphere, in kilometers.
#[derive(Debug, Clone, Copy)]
pub struct EqualAreaProjection {
    center: GeoPoint,
    sin_phi1: f64,
    cos_phi1: f64,
}

impl EqualAreaProjection {
    pub fn new(center: GeoPoint) -> Self {
        let phi1 = center.lat.to_radians();
        Self {
            center,
            sin_phi1: phi1.sin(),
            cos_phi1: phi1.cos(),
        }
    }

    pub fn forward(&self, p: GeoPoint) -> (f64, f64) {
        let phi = p.lat.to_radians();
        let dl = (p.lon - self.center.lon).to_radians();
        let (sin_phi, cos_phi) = phi.sin_cos();
        let denom = 1.0 + self.sin_phi1 * sin_phi + self.cos_phi1 * cos_phi * dl.cos();
        // Antipode of the center is a singularity; shapes in scope never reach it.
        let k = (2.0 / denom.max(1e-15)).sqrt();
        let x = EARTH_RADIUS_KM * k * cos_phi * dl.sin();
        let y = EARTH_RADIUS_KM * k * (self.cos_phi1 * sin_phi - self.sin_phi1 * cos_phi * dl.cos());
        (x, y)
    }

    pub fn inverse(&self, x: f64, y: f64) -> GeoPoint {
        let rho = x.hypot(y);
        if rho < 1e-12 {
            return self.center;
        }
        let c = 2.0 * (rho / (2.0 * EARTH_RADIUS_KM)).min(1.0).asin();
        let (sin_c, cos_c) = c.sin_cos();
        let phi = (cos_c * self.sin_phi1 + y * sin_c * self.cos_phi1 / rho)
            .clamp(-1.0, 1.0)
            .asin();
        let lambda = (x * sin_c).atan2(rho * self.cos_phi1 * cos_c - y * self.sin_phi1 * sin_c);
        GeoPoint::new(phi.to_degrees(), self.center.lon + lambda.to_degrees())
    }
}
