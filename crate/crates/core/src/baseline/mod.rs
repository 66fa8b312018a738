//! Reference models the blended filter is compared against.
//!
//! - [`ulpa_bounds`]: a fixed-growth arrival envelope that resets to the RTA tolerance at
//!   every waypoint.
//! - [`gated_kf`]: the same filter with updates switched off until late in each segment.
//! - [`monte_carlo_oracle`]: sampled trajectories through the filter's own gain schedule.

mod monte_carlo;
mod ulpa;

pub use monte_carlo::{
    monte_carlo_oracle, relative_frobenius, write_arrivals_csv, write_mc_csv, McConfig,
    McResult, McStep,
};
pub use ulpa::{ulpa_bounds, ulpa_half_width, ulpa_vertices, UlpaBound, UlpaConfig};

use crate::filter::{propagate_plan_with, FilterConfig, FilterError, SegmentTrace, UpdatePolicy};
use crate::geo::LocalPlan;
use crate::scalar::Real;
use crate::spline::TrajectorySpline;

/// Filter that ignores the plan until `fraction` of each segment has elapsed, then trusts it
/// with Q_min.
pub fn gated_kf<T: Real>(
    spline: &TrajectorySpline<T>,
    plan: &LocalPlan<T>,
    cfg: &FilterConfig<T>,
    fraction: T,
) -> Result<Vec<SegmentTrace<T>>, FilterError> {
    if !(fraction >= T::zero() && fraction <= T::one()) {
        return Err(FilterError::InvalidConfig(format!(
            "gate fraction must lie in [0, 1], got {fraction}"
        )));
    }
    propagate_plan_with(spline, plan, cfg, UpdatePolicy::Gated { fraction })
}
