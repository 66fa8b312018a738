//! Track-to-plan comparison: epoch alignment, deviations, covariances, arrival times.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::{AdsbTrack, TuningError};
use crate::geo::{EnuFrame, LocalPlan};
use crate::rta::RtaEstimate;
use crate::scalar::CompensatedSum;
use crate::spline::TrajectorySpline;

/// A track expressed in a plan's ENU frame, time still in the track's own clock.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTrack {
    pub flight_id: String,
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
}

pub fn project_track(track: &AdsbTrack, frame: &EnuFrame) -> LocalTrack {
    let (times, positions) = track
        .samples()
        .iter()
        .map(|s| (s.t, frame.to_local(s.latitude, s.longitude, s.altitude)))
        .unzip();
    LocalTrack {
        flight_id: track.flight_id().to_string(),
        times,
        positions,
    }
}

/// Least-squares line `p(t) = p̄ + v (t - t̄)` through the samples; `None` for < 2 samples
/// or a degenerate time spread.
fn fit_line(times: &[f64], positions: &[Vector3<f64>]) -> Option<(f64, Vector3<f64>, Vector3<f64>)> {
    if times.len() < 2 {
        return None;
    }
    let n = times.len() as f64;
    let t_bar = times.iter().sum::<f64>() / n;
    let p_bar = positions.iter().sum::<Vector3<f64>>() / n;
    let (mut stt, mut stp) = (0.0, Vector3::zeros());
    for (t, p) in times.iter().zip(positions) {
        stt += (t - t_bar) * (t - t_bar);
        stp += (p - p_bar) * (t - t_bar);
    }
    (stt > 0.0).then(|| (t_bar, p_bar, stp / stt))
}

fn window(times: &[f64], center: f64, half: f64) -> std::ops::Range<usize> {
    let lo = times.partition_point(|&t| t < center - half);
    let hi = times.partition_point(|&t| t <= center + half);
    lo..hi
}

/// Least-squares quadratic `p(t) = c₀ + c₁ τ + c₂ τ²`, `τ = t - t̄`; `None` for < 3 samples
/// or a degenerate time spread.
fn fit_quadratic(times: &[f64], positions: &[Vector3<f64>]) -> Option<(f64, [Vector3<f64>; 3])> {
    if times.len() < 3 {
        return None;
    }
    let t_bar = times.iter().sum::<f64>() / times.len() as f64;
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Matrix3::<f64>::zeros();
    for (t, p) in times.iter().zip(positions) {
        let tau = t - t_bar;
        let basis = Vector3::new(1.0, tau, tau * tau);
        normal += basis * basis.transpose();
        rhs += basis * p.transpose();
    }
    let coef = normal.cholesky()?.solve(&rhs);
    let row = |i: usize| coef.row(i).transpose();
    Some((t_bar, [row(0), row(1), row(2)]))
}

/// Track time at which the aircraft passes closest to `point`.
///
/// The nearest sample is refined on a quadratic fitted to the samples within `half_window`
/// seconds of it (falling back to a line, then to the sample itself).
pub fn closest_approach_time(track: &LocalTrack, point: &Vector3<f64>, half_window: f64) -> f64 {
    let (best, _) = track
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - point).norm_squared()))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let t0 = track.times[best];
    let r = window(&track.times, t0, half_window);
    let (ts, ps) = (&track.times[r.clone()], &track.positions[r]);
    if let Some((t_bar, [c0, c1, c2])) = fit_quadratic(ts, ps) {
        // Newton on d/dt ½‖p(t) - point‖², kept inside the fitted window.
        let (lo, hi) = (ts[0], ts[ts.len() - 1]);
        let mut tau = t0 - t_bar;
        for _ in 0..8 {
            let d = c0 + c1 * tau + c2 * (tau * tau) - point;
            let v = c1 + c2 * (2.0 * tau);
            let g = d.dot(&v);
            let h = v.norm_squared() + d.dot(&(c2 * 2.0));
            if h <= 0.0 {
                break;
            }
            let next = (tau - g / h).clamp(lo - t_bar, hi - t_bar);
            let done = (next - tau).abs() < 1e-9;
            tau = next;
            if done {
                return t_bar + tau;
            }
        }
        if (t_bar + tau - t0).abs() <= half_window {
            return t_bar + tau;
        }
    }
    match fit_line(ts, ps) {
        Some((t_bar, p_bar, v)) if v.norm_squared() > 0.0 => {
            t_bar - (p_bar - point).dot(&v) / v.norm_squared()
        }
        _ => t0,
    }
}

/// Deviations of a track from its plan, on the plan's local clock.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationSeries {
    pub flight_id: String,
    /// Track-clock time mapped to the first waypoint.
    pub track_epoch: f64,
    /// Plan-local times, within `[0, plan duration]`.
    pub times: Vec<f64>,
    /// Observed minus planned position, ENU meters.
    pub deviations: Vec<Vector3<f64>>,
}

impl DeviationSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `sqrt(mean ‖d‖²)`, meters.
    pub fn rms(&self) -> f64 {
        if self.deviations.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.deviations.iter().map(|d| d.norm_squared()).sum();
        (ss / self.deviations.len() as f64).sqrt()
    }
}

/// Aligns the track to the plan and samples the deviation at every track time inside the
/// plan horizon.
pub fn match_track_to_plan(
    track: &LocalTrack,
    plan: &LocalPlan<f64>,
    spline: &TrajectorySpline<f64>,
    align_window_s: f64,
) -> Result<DeviationSeries, TuningError> {
    let first = plan.points()[0].position;
    let track_epoch = closest_approach_time(track, &first, align_window_s);
    let horizon = plan.duration();
    let mut times = Vec::new();
    let mut deviations = Vec::new();
    for (t, p) in track.times.iter().zip(&track.positions) {
        let local = t - track_epoch;
        if (0.0..=horizon).contains(&local) {
            times.push(local);
            deviations.push(p - spline.position_at(local)?);
        }
    }
    if times.is_empty() {
        return Err(TuningError::NoOverlap(track.flight_id.clone()));
    }
    Ok(DeviationSeries {
        flight_id: track.flight_id.clone(),
        track_epoch,
        times,
        deviations,
    })
}

/// Unbiased sample covariance of the deviation vectors.
pub fn extract_covariance(dev: &DeviationSeries) -> Result<Matrix3<f64>, TuningError> {
    let n = dev.deviations.len();
    if n < 2 {
        return Err(TuningError::InsufficientSamples { needed: 2, found: n });
    }
    let mean = dev.deviations.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for d in &dev.deviations {
        let c = d - mean;
        cov += c * c.transpose();
    }
    cov /= (n - 1) as f64;
    Ok((cov + cov.transpose()) * 0.5)
}

/// Element-wise mean, accumulated with compensated sums.
pub fn average_covariances(per_flight: &[Matrix3<f64>]) -> Result<Matrix3<f64>, TuningError> {
    if per_flight.is_empty() {
        return Err(TuningError::NoFlightsRetained);
    }
    let mut acc = [CompensatedSum::<f64>::default(); 9];
    for m in per_flight {
        for (a, v) in acc.iter_mut().zip(m.iter()) {
            a.add(*v);
        }
    }
    let n = per_flight.len() as f64;
    Ok(Matrix3::from_iterator(acc.iter().map(|a| a.value() / n)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rejection {
    pub flight_id: String,
    pub rms_m: f64,
}

/// Flights dropped by [`prune_tracks`], with the RMS that disqualified them.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PruneReport {
    pub max_rms_m: f64,
    pub retained: usize,
    pub rejected: Vec<Rejection>,
}

/// Keeps the series whose deviation RMS is at most `max_rms_m`, preserving order.
pub fn prune_tracks(
    series: Vec<DeviationSeries>,
    max_rms_m: f64,
) -> (Vec<DeviationSeries>, PruneReport) {
    let mut report = PruneReport {
        max_rms_m,
        ..PruneReport::default()
    };
    let kept: Vec<_> = series
        .into_iter()
        .filter(|s| {
            let rms = s.rms();
            let keep = rms <= max_rms_m;
            if !keep {
                report.rejected.push(Rejection {
                    flight_id: s.flight_id.clone(),
                    rms_m: rms,
                });
            }
            keep
        })
        .collect();
    report.retained = kept.len();
    (kept, report)
}

/// Time the track crosses the plane through waypoint `k ≥ 1` normal to segment `k`, on the
/// plan's absolute clock.
///
/// The first sample at or past the plane is located and the signed distance is fitted
/// linearly against time over `half_window` seconds around it; the zero of that fit is the
/// crossing. `None` if the track never reaches the plane.
pub fn observed_arrival_time(
    track: &LocalTrack,
    plan: &LocalPlan<f64>,
    k: usize,
    track_epoch: f64,
    half_window: f64,
) -> Option<f64> {
    let pts = plan.points();
    if k == 0 || k >= pts.len() {
        return None;
    }
    let wp = pts[k].position;
    let normal = (wp - pts[k - 1].position).normalize();
    let side: Vec<f64> = track.positions.iter().map(|p| (p - wp).dot(&normal)).collect();
    // Only look after the track has left the previous waypoint.
    let t_prev = track_epoch + pts[k - 1].t;
    let start = track.times.partition_point(|&t| t < t_prev);
    let i = (start..side.len()).find(|&i| side[i] >= 0.0)?;
    let t_cross = if i > 0 && side[i - 1] < 0.0 {
        let f = -side[i - 1] / (side[i] - side[i - 1]);
        track.times[i - 1] + f * (track.times[i] - track.times[i - 1])
    } else {
        track.times[i]
    };

    let r = window(&track.times, t_cross, half_window);
    let (ts, ss) = (&track.times[r.clone()], &side[r]);
    let refined = if ts.len() >= 2 {
        let n = ts.len() as f64;
        let t_bar = ts.iter().sum::<f64>() / n;
        let s_bar = ss.iter().sum::<f64>() / n;
        let (mut stt, mut sts) = (0.0, 0.0);
        for (t, s) in ts.iter().zip(ss) {
            stt += (t - t_bar) * (t - t_bar);
            sts += (t - t_bar) * (s - s_bar);
        }
        (stt > 0.0 && sts > 0.0).then(|| t_bar - s_bar * stt / sts)
    } else {
        None
    };
    Some(plan.origin().rta + refined.unwrap_or(t_cross) - track_epoch)
}

/// Fraction of flights whose actual arrival lies inside the predicted bounds.
pub fn arrival_accuracy(
    predictions: &[RtaEstimate<f64>],
    actuals: &[f64],
) -> Result<f64, TuningError> {
    if predictions.len() != actuals.len() {
        return Err(TuningError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    if predictions.is_empty() {
        return Err(TuningError::InsufficientSamples { needed: 1, found: 0 });
    }
    let hits = predictions
        .iter()
        .zip(actuals)
        .filter(|(p, &a)| p.contains(a))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}
