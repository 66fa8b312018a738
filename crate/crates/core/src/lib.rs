//! Arrival-time uncertainty along 4D flight plans.
//!
//! A plan (waypoints with required times of arrival) is projected into a local ENU frame and
//! fitted with a shape-preserving cubic. A constant-velocity Kalman filter is then stepped
//! along the fit, using the planned velocity as control input and the planned position as a
//! measurement whose noise is blended by a sigmoid of segment progress: loose early in a
//! segment, tight near the next waypoint. The velocity variance at each waypoint becomes an
//! arrival-time variance and, summed along the route, per-waypoint RTA bounds.
//!
//! ```
//! use rtaprop::{filter, rta, spline, LocalPlan};
//!
//! let plan = LocalPlan::from_xyzt(&[
//!     (0.0, 0.0, 0.0, 0.0),
//!     (6000.0, 0.0, 0.0, 200.0),
//!     (6000.0, 4500.0, 0.0, 350.0),
//! ]).unwrap();
//! let fit = spline::fit_trajectory(&plan).unwrap();
//! let traces = filter::propagate_plan(&fit, &plan, &filter::FilterConfig::default()).unwrap();
//! let bounds = rta::estimate_rtas(&plan, &traces, &rta::RtaConfig::default()).unwrap();
//! assert_eq!(bounds.len(), 3);
//! assert!(bounds[2].upper >= bounds[2].nominal_rta);
//! ```
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! `f64`, with `*F32` variants for single precision. Geodesy and flight-data handling are
//! `f64` only.

pub mod baseline;
pub mod config;
pub mod filter;
pub mod geo;
pub mod rta;
pub mod scalar;
pub mod spline;
pub mod tuning;

use thiserror::Error;

pub use geo::{FlightPlan, GeoError, GeoWaypoint};
pub use scalar::Real;

pub type LocalPlan = geo::LocalPlan<f64>;
pub type LocalPlanF32 = geo::LocalPlan<f32>;
pub type Spline = spline::TrajectorySpline<f64>;
pub type SplineF32 = spline::TrajectorySpline<f32>;
pub type FilterConfig = filter::FilterConfig<f64>;
pub type FilterConfigF32 = filter::FilterConfig<f32>;
pub type FilterState = filter::FilterState<f64>;
pub type FilterStateF32 = filter::FilterState<f32>;
pub type SegmentTrace = filter::SegmentTrace<f64>;
pub type SegmentTraceF32 = filter::SegmentTrace<f32>;
pub type RtaConfig = rta::RtaConfig<f64>;
pub type RtaEstimate = rta::RtaEstimate<f64>;
pub type UlpaConfig = baseline::UlpaConfig<f64>;
pub type McConfig = baseline::McConfig<f64>;
pub type McResult = baseline::McResult<f64>;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Spline(#[from] spline::SplineError),
    #[error(transparent)]
    Filter(#[from] filter::FilterError),
    #[error(transparent)]
    Rta(#[from] rta::RtaError),
    #[error(transparent)]
    Tuning(#[from] tuning::TuningError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        use filter::FilterError::{NonFinite, SingularInnovation};
        matches!(
            self,
            Error::Filter(SingularInnovation | NonFinite { .. })
                | Error::Tuning(tuning::TuningError::Numerical(_))
                | Error::Tuning(tuning::TuningError::Filter(SingularInnovation | NonFinite { .. }))
        )
    }

    /// True for failures writing output.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Csv(_) | Error::Io(_))
    }
}
