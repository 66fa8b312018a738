//! Constant-growth arrival-time envelope with FMS convergence.
//!
//! Per segment the half-width starts at the waypoint tolerance, grows at `growth_rate`
//! seconds per second of flight until `activation_fraction` of the segment has elapsed,
//! then closes linearly back to the tolerance at the next waypoint.

use crate::geo::LocalPlan;
use crate::scalar::{lit, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct UlpaConfig<T: Real> {
    /// Envelope slope, seconds of arrival-time spread per second of flight.
    pub growth_rate: T,
    pub activation_fraction: T,
    /// Half-width enforced at every waypoint, seconds.
    pub rta_tolerance: T,
}

impl<T: Real> Default for UlpaConfig<T> {
    fn default() -> Self {
        Self {
            growth_rate: lit(1.06),
            activation_fraction: lit(2.0 / 3.0),
            rta_tolerance: lit(10.0),
        }
    }
}

impl<T: Real> UlpaConfig<T> {
    pub fn is_valid(&self) -> bool {
        self.activation_fraction > T::zero()
            && self.activation_fraction < T::one()
            && self.rta_tolerance >= T::zero()
            && self.growth_rate >= T::zero()
    }
}

/// Arrival window at one waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct UlpaBound<T: Real> {
    pub waypoint_index: usize,
    pub nominal_rta: T,
    pub lower: T,
    pub upper: T,
}

/// Vertices `(t, half_width)` of the piecewise-linear envelope, plan-local time.
///
/// Each segment contributes its start, its activation breakpoint and (for the last
/// segment) its end.
pub fn ulpa_vertices<T: Real>(plan: &LocalPlan<T>, cfg: &UlpaConfig<T>) -> Vec<(T, T)> {
    let pts = plan.points();
    let mut out = Vec::with_capacity(2 * pts.len());
    for w in pts.windows(2) {
        let (t0, t1) = (w[0].t, w[1].t);
        let t_act = t0 + cfg.activation_fraction * (t1 - t0);
        out.push((t0, cfg.rta_tolerance));
        out.push((t_act, cfg.rta_tolerance + cfg.growth_rate * (t_act - t0)));
    }
    out.push((plan.duration(), cfg.rta_tolerance));
    out
}

/// Envelope half-width at plan-local time `t` (clamped to the plan horizon).
pub fn ulpa_half_width<T: Real>(plan: &LocalPlan<T>, cfg: &UlpaConfig<T>, t: T) -> T {
    let v = ulpa_vertices(plan, cfg);
    let t = t.clamp(T::zero(), plan.duration());
    let i = v
        .partition_point(|&(tv, _)| tv <= t)
        .clamp(1, v.len() - 1);
    let ((t0, h0), (t1, h1)) = (v[i - 1], v[i]);
    if t1 <= t0 {
        return h1;
    }
    h0 + (h1 - h0) * (t - t0) / (t1 - t0)
}

/// Per-waypoint arrival windows: every RTA is held to ±tolerance.
pub fn ulpa_bounds<T: Real>(plan: &LocalPlan<T>, cfg: &UlpaConfig<T>) -> Vec<UlpaBound<T>> {
    let epoch = lit::<T>(plan.origin().rta);
    plan.points()
        .iter()
        .enumerate()
        .map(|(k, p)| UlpaBound {
            waypoint_index: k,
            nominal_rta: epoch + p.t,
            lower: epoch + p.t - cfg.rta_tolerance,
            upper: epoch + p.t + cfg.rta_tolerance,
        })
        .collect()
}
