//! Geodesy on WGS84 coordinates and proximity-episode detection.

mod approach;
mod fix;

pub use approach::{detect_approach_events, ApproachEvent, UserPair};
pub use fix::{read_trace, write_trace, FixStore, PositionFix, StoreError, UserId};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used for every great-circle computation, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("proximity threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("duplicate fix for user {user} at tick {tick}")]
    DuplicateFix { user: String, tick: u64 },
}

/// A WGS84 latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    /// Degree-space midpoint. Only meaningful for nearby points away from the antimeridian.
    pub fn midpoint(&self, other: &GeoPoint) -> GeoPoint {
        GeoPoint {
            lat: (self.lat + other.lat) / 2.0,
            lon: (self.lon + other.lon) / 2.0,
        }
    }

    /// Moves the point by a local east/north displacement in meters.
    ///
    /// Uses the spherical small-displacement approximation, accurate to well under a
    /// millimeter for displacements of a few kilometers.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        GeoPoint {
            lat: (self.lat + dlat).clamp(-90.0, 90.0),
            lon: self.lon + dlon,
        }
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let half_dphi = ((b.lat - a.lat).to_radians() / 2.0).sin();
    let half_dlambda = ((b.lon - a.lon).to_radians() / 2.0).sin();
    let h = half_dphi * half_dphi + phi1.cos() * phi2.cos() * (half_dlambda * half_dlambda);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Linear equirectangular projection about a fixed reference latitude.
///
/// Degree coordinates map to meters through a diagonal linear map, so the arithmetic
/// mean of points in degree space projects onto the Euclidean mean in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPlane {
    east_scale: f64,
    north_scale: f64,
}

impl LocalPlane {
    pub fn new(reference_lat: f64) -> Self {
        let north_scale = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Self {
            east_scale: north_scale * reference_lat.to_radians().cos(),
            north_scale,
        }
    }

    /// Plane centred on the mean latitude of `points` (equator for an empty set).
    pub fn fitted(points: &[GeoPoint]) -> Self {
        if points.is_empty() {
            return Self::new(0.0);
        }
        let mean = points.iter().map(|p| p.lat).sum::<f64>() / points.len() as f64;
        Self::new(mean)
    }

    pub fn project(&self, p: &GeoPoint) -> [f64; 2] {
        [p.lon * self.east_scale, p.lat * self.north_scale]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> GeoPoint {
        GeoPoint {
            lat: xy[1] / self.north_scale,
            lon: xy[0] / self.east_scale,
        }
    }

    pub fn distance_sq(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        let pa = self.project(a);
        let pb = self.project(b);
        let dx = pa[0] - pb[0];
        let dy = pa[1] - pb[1];
        dx * dx + dy * dy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let denver = pt(39.7392, -104.9903);
        assert_eq!(haversine_distance(&denver, &denver), 0.0);
    }

    #[test]
    fn one_degree_on_equator() {
        // R * (pi / 180)
        let oracle = EARTH_RADIUS_M * 1.0_f64.to_radians();
        assert!((oracle - 111_194.93).abs() < 0.01);
        let d = haversine_distance(&pt(0.0, 0.0), &pt(0.0, 1.0));
        assert!((d - 111_194.93).abs() < 0.01, "{d}");
    }

    #[test]
    fn pure_latitude_step() {
        let oracle = EARTH_RADIUS_M * 1e-4_f64.to_radians();
        assert!((oracle - 11.12).abs() < 0.01);
        let d = haversine_distance(&pt(39.7392, -104.9903), &pt(39.7393, -104.9903));
        assert!((d - 11.12).abs() < 0.01, "{d}");
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(GeoPoint::new(90.5, 0.0), Err(GeoError::Latitude(90.5)));
        assert_eq!(GeoPoint::new(0.0, -180.1), Err(GeoError::Longitude(-180.1)));
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":91,"lon":0}"#).is_err());
    }

    #[test]
    fn offset_round_trips_distance() {
        let origin = pt(39.7392, -104.9903);
        let moved = origin.offset_m(3.0, 4.0);
        assert!((haversine_distance(&origin, &moved) - 5.0).abs() < 1e-3);
    }

    #[test]
    fn plane_mean_matches_degree_mean() {
        let pts = [pt(39.0, -105.0), pt(39.01, -105.02), pt(39.02, -104.99)];
        let plane = LocalPlane::fitted(&pts);
        let mut sum = [0.0, 0.0];
        for p in &pts {
            let xy = plane.project(p);
            sum[0] += xy[0];
            sum[1] += xy[1];
        }
        let mean = plane.unproject([sum[0] / 3.0, sum[1] / 3.0]);
        let lat = pts.iter().map(|p| p.lat).sum::<f64>() / 3.0;
        let lon = pts.iter().map(|p| p.lon).sum::<f64>() / 3.0;
        assert!((mean.lat - lat).abs() < 1e-12);
        assert!((mean.lon - lon).abs() < 1e-12);
    }
}
