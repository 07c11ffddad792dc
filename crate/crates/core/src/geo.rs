//! Geographic coordinates and their embedding on the unit sphere.
//!
//! The earth is treated as a perfect unit sphere; only directions matter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Latitude and longitude in degrees. Longitude lives in (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validates ranges and folds longitude into (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        let lon = if lon == -180.0 { 180.0 } else { lon };
        Ok(GeoPoint { lat, lon })
    }
}

/// A direction in R^3 with unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVec3([f64; 3]);

impl UnitVec3 {
    pub const NORTH_POLE: UnitVec3 = UnitVec3([0.0, 0.0, 1.0]);

    /// Accepts a vector already of unit norm (within 1e-6) and renormalizes it.
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let norm = norm3(&v);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidVector { norm });
        }
        Ok(UnitVec3([v[0] / norm, v[1] / norm, v[2] / norm]))
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(v: [f64; 3]) -> Option<Self> {
        let norm = norm3(&v);
        if norm > 0.0 && norm.is_finite() {
            Some(UnitVec3([v[0] / norm, v[1] / norm, v[2] / norm]))
        } else {
            None
        }
    }

    pub(crate) fn from_raw(v: [f64; 3]) -> Self {
        UnitVec3(v)
    }

    pub fn as_array(&self) -> &[f64; 3] {
        &self.0
    }

    pub fn dot(&self, other: &[f64; 3]) -> f64 {
        dot3(&self.0, other)
    }
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

pub fn latlon_to_unit(p: GeoPoint) -> Result<UnitVec3> {
    let p = GeoPoint::new(p.lat, p.lon)?;
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    Ok(UnitVec3([clat * clon, clat * slon, slat]))
}

/// Inverse of [`latlon_to_unit`]. At the poles the longitude is reported as 0.
pub fn unit_to_latlon(v: UnitVec3) -> Result<GeoPoint> {
    let [x, y, z] = v.0;
    let norm = norm3(&v.0);
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidVector { norm });
    }
    let horiz = x.hypot(y);
    let lat = z.atan2(horiz).to_degrees();
    let lon = if horiz == 0.0 { 0.0 } else { y.atan2(x).to_degrees() };
    GeoPoint::new(lat.clamp(-90.0, 90.0), lon)
}
