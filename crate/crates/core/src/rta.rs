//! Arrival-time variance and confidence bounds per waypoint.
//!
//! Each segment is treated as constant cruise `v_k = Δp_k / Δt_k`. The velocity variance the
//! filter carries at waypoint passage is turned into a time variance
//! `Δt_k · ‖σ²_v‖ / ‖v_k‖`, counted only while `‖σ²_v‖ / ‖v_k‖ < δ · v̄₀`, and summed along the
//! route. Arrival at waypoint k is then `N(t̄_k, Σ_{i≤k} σ²_i)`.

use std::io::Write;

use nalgebra::Vector3;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::filter::SegmentTrace;
use crate::geo::LocalPlan;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtaError {
    #[error("segment index {index} out of range for a plan with {waypoints} waypoints")]
    SegmentIndex { index: usize, waypoints: usize },
    #[error("segment {0} has zero length")]
    ZeroLength(usize),
    #[error("velocity variance must be non-negative")]
    NegativeVelocityVariance,
    #[error("threshold parameters must be positive (delta = {delta}, v_bar0 = {v_bar0})")]
    InvalidThreshold { delta: f64, v_bar0: f64 },
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("expected {expected} segment traces, got {found}")]
    TraceMismatch { expected: usize, found: usize },
}

/// Constant-cruise description of one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentKinematics<T: Real> {
    /// `p_k - p_{k-1}`, meters.
    pub delta_p: Vector3<T>,
    /// `t_k - t_{k-1}`, seconds.
    pub delta_t: T,
    /// Cruise velocity, m/s.
    pub v: Vector3<T>,
}

impl<T: Real> SegmentKinematics<T> {
    /// Segment duration recovered from distance over speed.
    pub fn implied_duration(&self) -> T {
        self.delta_p.norm() / self.v.norm()
    }
}

/// Kinematics of the segment ending at waypoint `k` (1-based over segments).
pub fn segment_kinematics<T: Real>(
    plan: &LocalPlan<T>,
    k: usize,
) -> Result<SegmentKinematics<T>, RtaError> {
    let pts = plan.points();
    if k == 0 || k >= pts.len() {
        return Err(RtaError::SegmentIndex {
            index: k,
            waypoints: pts.len(),
        });
    }
    let delta_p = pts[k].position - pts[k - 1].position;
    let delta_t = pts[k].t - pts[k - 1].t;
    if delta_p.norm() == T::zero() {
        return Err(RtaError::ZeroLength(k));
    }
    Ok(SegmentKinematics {
        delta_p,
        delta_t,
        v: delta_p / delta_t,
    })
}

/// Arrival-time variance contributed by one segment, s².
///
/// Returns `Δt · ‖σ²_v‖ / ‖v‖` when `‖σ²_v‖ / ‖v‖ < delta · v_bar0` (strictly), otherwise 0.
pub fn segment_time_variance<T: Real>(
    kin: &SegmentKinematics<T>,
    sigma2_v: &Vector3<T>,
    delta: T,
    v_bar0: T,
) -> Result<T, RtaError> {
    if !(delta > T::zero()) || !(v_bar0 > T::zero()) {
        return Err(RtaError::InvalidThreshold {
            delta: to_f64(delta),
            v_bar0: to_f64(v_bar0),
        });
    }
    if sigma2_v.iter().any(|&s| !(s >= T::zero())) {
        return Err(RtaError::NegativeVelocityVariance);
    }
    let ratio = sigma2_v.norm() / kin.v.norm();
    Ok(if ratio < delta * v_bar0 {
        kin.delta_t * ratio
    } else {
        T::zero()
    })
}

/// Running sum of per-segment variances.
pub fn cumulative_variance<T: Real>(per_segment: &[T]) -> Vec<T> {
    per_segment
        .iter()
        .scan(T::zero(), |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Two-sided standard-normal quantile for a central probability `confidence`.
pub fn two_sided_z(confidence: f64) -> Result<f64, RtaError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(RtaError::InvalidConfidence(confidence));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + confidence / 2.0))
}

/// `nominal ∓ z(confidence) · sqrt(variance)`.
pub fn rta_bounds<T: Real>(nominal: T, variance: T, confidence: T) -> Result<(T, T), RtaError> {
    if !(variance >= T::zero()) {
        return Err(RtaError::NegativeVariance(to_f64(variance)));
    }
    let half = lit::<T>(two_sided_z(to_f64(confidence))?) * variance.sqrt();
    Ok((nominal - half, nominal + half))
}

/// Settings for turning filter output into arrival-time bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct RtaConfig<T: Real> {
    pub confidence: T,
    /// Threshold factor δ.
    pub delta: T,
    /// Nominal speed v̄₀, m/s; `None` uses the plan's mean cruise speed.
    pub v_bar0: Option<T>,
}

impl<T: Real> Default for RtaConfig<T> {
    fn default() -> Self {
        Self {
            confidence: lit(0.95),
            delta: T::one(),
            v_bar0: None,
        }
    }
}

/// Arrival-time distribution at one waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct RtaEstimate<T: Real> {
    pub waypoint_index: usize,
    /// Seconds since the plan epoch.
    pub nominal_rta: T,
    /// s².
    pub time_variance: T,
    pub lower: T,
    pub upper: T,
    pub confidence: T,
}

impl<T: Real> RtaEstimate<T> {
    pub fn contains(&self, t: T) -> bool {
        self.lower <= t && t <= self.upper
    }
}

/// Per-waypoint estimates from a propagated plan. Waypoint 0 has zero variance.
pub fn estimate_rtas<T: Real>(
    plan: &LocalPlan<T>,
    traces: &[SegmentTrace<T>],
    cfg: &RtaConfig<T>,
) -> Result<Vec<RtaEstimate<T>>, RtaError> {
    let segments = plan.len() - 1;
    if traces.len() != segments {
        return Err(RtaError::TraceMismatch {
            expected: segments,
            found: traces.len(),
        });
    }
    let v_bar0 = cfg.v_bar0.unwrap_or_else(|| plan.mean_speed());
    let per_segment = traces
        .iter()
        .enumerate()
        .map(|(i, trace)| {
            let kin = segment_kinematics(plan, i + 1)?;
            segment_time_variance(&kin, &trace.waypoint_velocity_variance(), cfg.delta, v_bar0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let epoch = lit::<T>(plan.origin().rta);
    std::iter::once(T::zero())
        .chain(cumulative_variance(&per_segment))
        .zip(plan.points())
        .enumerate()
        .map(|(k, (variance, point))| {
            let nominal = epoch + point.t;
            let (lower, upper) = rta_bounds(nominal, variance, cfg.confidence)?;
            Ok(RtaEstimate {
                waypoint_index: k,
                nominal_rta: nominal,
                time_variance: variance,
                lower,
                upper,
                confidence: cfg.confidence,
            })
        })
        .collect()
}

/// Writes `waypoint,nominal_rta,variance,lower,upper,confidence`.
pub fn write_bounds_csv<T: Real, W: Write>(
    estimates: &[RtaEstimate<T>],
    out: W,
) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["waypoint", "nominal_rta", "variance", "lower", "upper", "confidence"])?;
    for e in estimates {
        w.write_record([
            e.waypoint_index.to_string(),
            e.nominal_rta.to_string(),
            e.time_variance.to_string(),
            e.lower.to_string(),
            e.upper.to_string(),
            e.confidence.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kin(dx: f64, dy: f64, dt: f64) -> SegmentKinematics<f64> {
        let plan = LocalPlan::from_xyzt(&[(0.0, 0.0, 0.0, 0.0), (dx, dy, 0.0, dt)]).unwrap();
        segment_kinematics(&plan, 1).unwrap()
    }

    #[test]
    fn kinematics_of_simple_segments() {
        let k = kin(600.0, 0.0, 60.0);
        assert_eq!(k.v, Vector3::new(10.0, 0.0, 0.0));
        assert_eq!(k.v.norm(), 10.0);
        assert!((k.implied_duration() - 60.0).abs() < 1e-9);
        let k = kin(300.0, 400.0, 50.0);
        assert_eq!(k.v.norm(), 10.0);
        assert!((k.implied_duration() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn kinematics_index_checks() {
        let plan = LocalPlan::<f64>::from_xyzt(&[(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 1.0)]).unwrap();
        assert!(segment_kinematics(&plan, 0).is_err());
        assert!(segment_kinematics(&plan, 2).is_err());
    }

    #[test]
    fn time_variance_case_split() {
        let k = kin(600.0, 0.0, 60.0);
        assert_eq!(segment_time_variance(&k, &Vector3::zeros(), 1.0, 10.0).unwrap(), 0.0);
        // ‖σ²_v‖ = 1, ‖v‖ = 10 → 60 · 0.1
        let s = segment_time_variance(&k, &Vector3::new(1.0, 0.0, 0.0), 1.0, 10.0).unwrap();
        assert!((s - 6.0).abs() < 1e-12);
        // ratio 0.1 exactly at the threshold δ·v̄₀ = 0.1 → excluded
        assert_eq!(segment_time_variance(&k, &Vector3::new(1.0, 0.0, 0.0), 0.5, 0.2).unwrap(), 0.0);
        assert!(segment_time_variance(&k, &Vector3::new(1.0, 0.0, 0.0), 0.0, 1.0).is_err());
        assert!(segment_time_variance(&k, &Vector3::new(1.0, 0.0, 0.0), 1.0, -1.0).is_err());
        assert!(segment_time_variance(&k, &Vector3::new(-1.0, 0.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn cumulative_sums() {
        assert_eq!(cumulative_variance(&[1.0, 2.0, 3.0]), vec![1.0, 3.0, 6.0]);
        assert_eq!(cumulative_variance(&[0.0f64; 4]), vec![0.0; 4]);
        assert!(cumulative_variance::<f64>(&[]).is_empty());
    }

    #[test]
    fn bounds() {
        assert_eq!(rta_bounds(100.0, 0.0, 0.95).unwrap(), (100.0, 100.0));
        let (lo, hi) = rta_bounds(100.0f64, 4.0, 0.9545).unwrap();
        assert!((hi - 104.0).abs() < 1e-3 && (lo - 96.0).abs() < 1e-3);
        assert_eq!(hi - 100.0, 100.0 - lo);
        assert!(rta_bounds(1.0, -1.0, 0.9).is_err());
        assert!(rta_bounds(1.0, 1.0, 1.0).is_err());
        assert!(rta_bounds(1.0, 1.0, 0.0).is_err());
    }
}
