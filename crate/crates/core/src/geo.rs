//! Flight plans: parsing, validation and projection into a local East-North-Up frame.
//!
//! The filter works in a linear Cartesian frame. Plans are projected geodetic (WGS-84)
//! to ECEF to an ENU tangent frame anchored at the first waypoint. Altitudes are
//! ellipsoidal heights; the plan file has to say so explicitly.
//!
//! Plan file format (TOML):
//!
//! ```toml
//! plan_id = "N172SP-1"
//! altitude_reference = "wgs84_ellipsoid"
//!
//! [[waypoint]]
//! lat_deg = 40.0
//! lon_deg = -105.0
//! alt_m = 1800.0
//! rta_s = 0.0
//!
//! [[waypoint]]
//! lat_deg = 40.05
//! lon_deg = -105.0
//! alt_m = 1900.0
//! rta_s = 120.0
//! ```

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::scalar::{lit, Real};

/// WGS-84 semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// The only altitude reference accepted in plan files.
pub const ALTITUDE_REFERENCE: &str = "wgs84_ellipsoid";

/// Minimum 3D separation between consecutive waypoints, meters.
pub const MIN_WAYPOINT_SEPARATION_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("malformed flight plan: {0}")]
    Malformed(String),
    #[error("unknown altitude reference {0:?} (expected \"{ALTITUDE_REFERENCE}\")")]
    AltitudeReference(String),
    #[error("flight plan needs at least 2 waypoints, found {0}")]
    TooFewWaypoints(usize),
    #[error("non-monotone RTA at index {index}")]
    NonMonotoneRta { index: usize },
    #[error("waypoint {index}: {field} {value} out of range")]
    OutOfRange {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("waypoint {index} coincides with waypoint {} ({separation_m:.3} m apart)", index - 1)]
    Coincident { index: usize, separation_m: f64 },
    #[error("local plan: {0}")]
    InvalidLocalPlan(String),
}

/// Waypoint in geodetic coordinates with its required time of arrival.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoWaypoint {
    pub latitude: f64,
    pub longitude: f64,
    /// Height above the WGS-84 ellipsoid, meters.
    pub altitude: f64,
    /// Seconds since the plan epoch.
    pub rta: f64,
}

impl GeoWaypoint {
    fn check(&self, index: usize) -> Result<(), GeoError> {
        let range = |field, value: f64, lo: f64, hi: f64| {
            if value.is_finite() && (lo..=hi).contains(&value) {
                Ok(())
            } else {
                Err(GeoError::OutOfRange { index, field, value })
            }
        };
        range("latitude", self.latitude, -90.0, 90.0)?;
        range("longitude", self.longitude, -180.0, 180.0)?;
        range("altitude", self.altitude, -1.0e5, 1.0e6)?;
        range("rta", self.rta, 0.0, f64::MAX)
    }
}

/// Validated, ordered 4D flight plan.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightPlan {
    plan_id: String,
    waypoints: Vec<GeoWaypoint>,
}

impl FlightPlan {
    pub fn new(plan_id: impl Into<String>, waypoints: Vec<GeoWaypoint>) -> Result<Self, GeoError> {
        if waypoints.len() < 2 {
            return Err(GeoError::TooFewWaypoints(waypoints.len()));
        }
        for (i, wp) in waypoints.iter().enumerate() {
            wp.check(i)?;
        }
        for i in 1..waypoints.len() {
            if waypoints[i].rta <= waypoints[i - 1].rta {
                return Err(GeoError::NonMonotoneRta { index: i });
            }
            let a = geodetic_to_ecef(&waypoints[i - 1]);
            let b = geodetic_to_ecef(&waypoints[i]);
            let separation_m = (b - a).norm();
            if separation_m <= MIN_WAYPOINT_SEPARATION_M {
                return Err(GeoError::Coincident { index: i, separation_m });
            }
        }
        Ok(Self {
            plan_id: plan_id.into(),
            waypoints,
        })
    }

    pub fn plan_id(&self) -> &str {
        &self.plan_id
    }

    pub fn waypoints(&self) -> &[GeoWaypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Writes the plan in canonical form. `parse_flight_plan` inverts this exactly.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        let id = toml::Value::String(self.plan_id.clone());
        writeln!(out, "plan_id = {id}").unwrap();
        writeln!(out, "altitude_reference = \"{ALTITUDE_REFERENCE}\"").unwrap();
        for wp in &self.waypoints {
            out.push_str("\n[[waypoint]]\n");
            writeln!(out, "lat_deg = {:?}", wp.latitude).unwrap();
            writeln!(out, "lon_deg = {:?}", wp.longitude).unwrap();
            writeln!(out, "alt_m = {:?}", wp.altitude).unwrap();
            writeln!(out, "rta_s = {:?}", wp.rta).unwrap();
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    plan_id: String,
    altitude_reference: String,
    #[serde(default)]
    waypoint: Vec<RawWaypoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaypoint {
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
    rta_s: f64,
}

/// Parses and validates a plan document.
pub fn parse_flight_plan(raw: &str) -> Result<FlightPlan, GeoError> {
    let doc: RawPlan = toml::from_str(raw).map_err(|e| GeoError::Malformed(e.to_string()))?;
    if doc.altitude_reference != ALTITUDE_REFERENCE {
        return Err(GeoError::AltitudeReference(doc.altitude_reference));
    }
    let waypoints = doc
        .waypoint
        .into_iter()
        .map(|w| GeoWaypoint {
            latitude: w.lat_deg,
            longitude: w.lon_deg,
            altitude: w.alt_m,
            rta: w.rta_s,
        })
        .collect();
    FlightPlan::new(doc.plan_id, waypoints)
}

pub fn geodetic_to_ecef(wp: &GeoWaypoint) -> Vector3<f64> {
    let (lat, lon) = (wp.latitude.to_radians(), wp.longitude.to_radians());
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
    Vector3::new(
        (n + wp.altitude) * clat * clon,
        (n + wp.altitude) * clat * slon,
        (n * (1.0 - WGS84_E2) + wp.altitude) * slat,
    )
}

/// Inverse of [`geodetic_to_ecef`]; returns (latitude deg, longitude deg, height m).
pub fn ecef_to_geodetic(p: &Vector3<f64>) -> (f64, f64, f64) {
    let lon = p.y.atan2(p.x);
    let rho = p.x.hypot(p.y);
    // Fixed-point iteration on latitude; converges to machine precision in a handful of steps
    // for any point outside the Earth's core.
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    let mut h = 0.0;
    for _ in 0..10 {
        let slat = lat.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
        h = rho * lat.cos() + p.z * slat - WGS84_A * (1.0 - WGS84_E2 * slat * slat).sqrt();
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + h)));
        let done = (next - lat).abs() < 1e-14;
        lat = next;
        if done {
            break;
        }
    }
    (lat.to_degrees(), lon.to_degrees(), h)
}

/// East-North-Up tangent frame at a geodetic origin.
#[derive(Clone, Debug, PartialEq)]
pub struct EnuFrame {
    origin: GeoWaypoint,
    origin_ecef: Vector3<f64>,
    /// Rows are the east, north and up unit vectors expressed in ECEF.
    rotation: Matrix3<f64>,
}

impl EnuFrame {
    pub fn new(origin: GeoWaypoint) -> Self {
        let (slat, clat) = origin.latitude.to_radians().sin_cos();
        let (slon, clon) = origin.longitude.to_radians().sin_cos();
        #[rustfmt::skip]
        let rotation = Matrix3::new(
            -slon,         clon,        0.0,
            -slat * clon, -slat * slon, clat,
             clat * clon,  clat * slon, slat,
        );
        Self {
            origin,
            origin_ecef: geodetic_to_ecef(&origin),
            rotation,
        }
    }

    pub fn origin(&self) -> &GeoWaypoint {
        &self.origin
    }

    pub fn to_local(&self, latitude: f64, longitude: f64, altitude: f64) -> Vector3<f64> {
        let ecef = geodetic_to_ecef(&GeoWaypoint {
            latitude,
            longitude,
            altitude,
            rta: 0.0,
        });
        self.rotation * (ecef - self.origin_ecef)
    }

    /// Back-projects an ENU position to (latitude deg, longitude deg, height m).
    pub fn to_geodetic(&self, enu: &Vector3<f64>) -> (f64, f64, f64) {
        ecef_to_geodetic(&(self.rotation.transpose() * enu + self.origin_ecef))
    }
}

/// A plan point in the local frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPoint<T: Real> {
    /// ENU position, meters.
    pub position: Vector3<T>,
    /// Seconds since the first waypoint.
    pub t: T,
}

/// Flight plan expressed in the ENU frame of its first waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPlan<T: Real> {
    origin: GeoWaypoint,
    points: Vec<LocalPoint<T>>,
}

impl<T: Real> LocalPlan<T> {
    /// Builds a local plan directly; the first point must sit at the origin at t = 0.
    pub fn new(origin: GeoWaypoint, points: Vec<LocalPoint<T>>) -> Result<Self, GeoError> {
        if points.len() < 2 {
            return Err(GeoError::TooFewWaypoints(points.len()));
        }
        let first = &points[0];
        if first.t != T::zero() || first.position != Vector3::zeros() {
            return Err(GeoError::InvalidLocalPlan(
                "first point must be (0, 0, 0) at t = 0".into(),
            ));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].t > w[0].t) || !w[1].t.is_finite() {
                return Err(GeoError::NonMonotoneRta { index: i + 1 });
            }
            if !w[1].position.iter().all(|c| c.is_finite()) {
                return Err(GeoError::InvalidLocalPlan(format!(
                    "non-finite position at index {}",
                    i + 1
                )));
            }
        }
        Ok(Self { origin, points })
    }

    /// Convenience for synthetic plans: origin at the null island, `(x, y, z, t)` tuples.
    pub fn from_xyzt(points: &[(f64, f64, f64, f64)]) -> Result<Self, GeoError> {
        let pts = points
            .iter()
            .map(|&(x, y, z, t)| LocalPoint {
                position: Vector3::new(lit(x), lit(y), lit(z)),
                t: lit(t),
            })
            .collect();
        Self::new(
            GeoWaypoint {
                latitude: 0.0,
                longitude: 0.0,
                altitude: 0.0,
                rta: 0.0,
            },
            pts,
        )
    }

    pub fn origin(&self) -> &GeoWaypoint {
        &self.origin
    }

    pub fn points(&self) -> &[LocalPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame(&self) -> EnuFrame {
        EnuFrame::new(self.origin)
    }

    /// Plan duration, seconds.
    pub fn duration(&self) -> T {
        self.points[self.points.len() - 1].t
    }

    /// Mean cruise speed over the whole route (path length / duration).
    pub fn mean_speed(&self) -> T {
        let length = self
            .points
            .windows(2)
            .fold(T::zero(), |acc, w| acc + (w[1].position - w[0].position).norm());
        length / self.duration()
    }

    pub fn cast<U: Real>(&self) -> LocalPlan<U> {
        LocalPlan {
            origin: self.origin,
            points: self
                .points
                .iter()
                .map(|p| LocalPoint {
                    position: p.position.map(|c| lit(crate::scalar::to_f64(c))),
                    t: lit(crate::scalar::to_f64(p.t)),
                })
                .collect(),
        }
    }
}

/// Projects a plan into the ENU frame anchored at its first waypoint.
pub fn to_local_frame(plan: &FlightPlan) -> LocalPlan<f64> {
    let origin = plan.waypoints[0];
    let frame = EnuFrame::new(origin);
    let points = plan
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, wp)| LocalPoint {
            position: if i == 0 {
                Vector3::zeros()
            } else {
                frame.to_local(wp.latitude, wp.longitude, wp.altitude)
            },
            t: wp.rta - origin.rta,
        })
        .collect();
    LocalPlan { origin, points }
}
