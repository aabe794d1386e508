//! Great-circle distance arithmetic in miles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Earth radius in miles. Fixed so distance-derived ledgers are bit-stable.
pub const EARTH_RADIUS_MILES: f64 = 3958.7613;

/// A point on the sphere in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("INVALID_COORDINATE: lat {lat} lon {lon} out of bounds")]
    InvalidCoordinate { lat: f64, lon: f64 },
}

impl GeoPoint {
    /// Construct a point, checking lat ∈ [-90, 90] and lon ∈ [-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self, SpatialError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) || lat.is_nan() || lon.is_nan() {
            return Err(SpatialError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// Haversine great-circle distance in miles.
///
/// Symmetric, zero iff the coordinates are identical.
pub fn distance_miles(a: GeoPoint, b: GeoPoint) -> Result<f64, SpatialError> {
    // Re-validate so raw struct literals cannot smuggle bad coordinates in.
    let a = GeoPoint::new(a.lat, a.lon)?;
    let b = GeoPoint::new(b.lat, b.lon)?;
    if a.lat == b.lat && a.lon == b.lon {
        return Ok(0.0);
    }
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    let c = 2.0 * h.sqrt().atan2((1.0 - h).sqrt());
    Ok(EARTH_RADIUS_MILES * c)
}
