//! Stepping the filter along a fitted plan.

use std::io::Write;

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use super::model::{blend_noise, predict_step, sigmoid_blend, update};
use super::{FilterConfig, FilterError, FilterState, ProgressMode};
use crate::geo::LocalPlan;
use crate::scalar::{lit, to_f64, Real};
use crate::spline::TrajectorySpline;

/// When and how strongly the planned position is fed back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdatePolicy<T: Real> {
    /// Update every step with the sigmoid-blended Q.
    Blended,
    /// No update while progress is below `fraction`, then update with Q_min.
    Gated { fraction: T },
}

/// One filter step: the state at the end of the step and how it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<T: Real> {
    /// 1-based step index within the segment.
    pub step: usize,
    /// Time at the end of the step.
    pub t: T,
    /// Step length (equals `dt` except for a trailing partial step).
    pub dt: T,
    /// Progress at the start of the step, in [0, 1].
    pub progress: T,
    /// Blend weight σ; 1 means no correction.
    pub blend: T,
    /// Mean diagonal of the Q used; infinite when the update was skipped.
    pub q_scale: T,
    pub control: Vector3<T>,
    pub measurement: Vector3<T>,
    /// Kalman gain applied (zero when skipped).
    pub gain: Matrix6x3<T>,
    /// Measurement noise applied (`None` when skipped).
    pub q: Option<Matrix3<T>>,
    pub mean: Vector6<T>,
    pub covariance: Matrix6<T>,
}

impl<T: Real> StepRecord<T> {
    pub fn state(&self) -> FilterState<T> {
        FilterState {
            mean: self.mean,
            covariance: self.covariance,
            t: self.t,
        }
    }
}

/// Everything recorded while crossing one plan segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentTrace<T: Real> {
    pub segment: usize,
    pub start_time: T,
    pub end_time: T,
    pub entry: FilterState<T>,
    pub steps: Vec<StepRecord<T>>,
    /// Set when `dt` exceeded the segment duration and a single step was taken instead.
    pub warning: Option<String>,
}

impl<T: Real> SegmentTrace<T> {
    /// State at waypoint passage (end of the segment).
    pub fn exit(&self) -> FilterState<T> {
        self.steps
            .last()
            .map(StepRecord::state)
            .unwrap_or_else(|| self.entry.clone())
    }

    /// Velocity variance σ²_v at the closing waypoint.
    pub fn waypoint_velocity_variance(&self) -> Vector3<T> {
        self.exit().velocity_variance()
    }
}

/// `sqrt(trace)` of the position block: a scalar spread used for smoothness comparisons.
pub fn position_std<T: Real>(covariance: &Matrix6<T>) -> T {
    (covariance[(0, 0)] + covariance[(1, 1)] + covariance[(2, 2)])
        .max(T::zero())
        .sqrt()
}

/// Position spread at plan start followed by its value after every step.
pub fn position_std_series<T: Real>(traces: &[SegmentTrace<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(traces.iter().map(|t| t.steps.len()).sum::<usize>() + 1);
    if let Some(first) = traces.first() {
        out.push(position_std(&first.entry.covariance));
    }
    for trace in traces {
        out.extend(trace.steps.iter().map(|s| position_std(&s.covariance)));
    }
    out
}

/// `(largest single-step decrease, largest absolute single-step change)` of a series.
pub fn step_changes<T: Real>(series: &[T]) -> (T, T) {
    series.windows(2).fold((T::zero(), T::zero()), |(drop, change), w| {
        let d = w[1] - w[0];
        (drop.max(-d), change.max(d.abs()))
    })
}

/// Step boundaries `t_s = τ_0 < τ_1 < … < τ_n = t_e` at stride `dt`.
pub(crate) fn step_times<T: Real>(start: T, end: T, dt: T) -> (Vec<T>, bool) {
    let duration = end - start;
    if dt > duration {
        return (vec![start, end], true);
    }
    let ratio = duration / dt;
    let full = ratio.floor();
    let slack = lit::<T>(1e-9);
    let mut n = to_f64(full) as usize;
    if ratio - full > slack {
        n += 1;
    }
    let mut times: Vec<T> = (0..n).map(|i| start + dt * lit(i as f64)).collect();
    times.push(end);
    (times, false)
}

fn progress<T: Real>(
    spline: &TrajectorySpline<T>,
    segment: usize,
    t: T,
    mode: ProgressMode,
) -> Result<T, FilterError> {
    let knots = spline.knots();
    let (t0, t1) = (knots[segment], knots[segment + 1]);
    let p = match mode {
        ProgressMode::Time => (t - t0) / (t1 - t0),
        ProgressMode::Distance => {
            let (a, b) = (spline.values()[segment], spline.values()[segment + 1]);
            let chord = b - a;
            (spline.position_at(t)? - a).dot(&chord) / chord.norm_squared()
        }
    };
    Ok(p.clamp(T::zero(), T::one()))
}

/// Propagates across one segment with the blended update.
pub fn propagate_segment<T: Real>(
    spline: &TrajectorySpline<T>,
    segment: usize,
    entry: &FilterState<T>,
    cfg: &FilterConfig<T>,
) -> Result<SegmentTrace<T>, FilterError> {
    propagate_segment_with(spline, segment, entry, cfg, UpdatePolicy::Blended)
}

/// Propagates across one segment under an explicit update policy.
///
/// Each step predicts with the spline velocity at the step start as the control input and
/// updates against the spline position at the step end.
pub fn propagate_segment_with<T: Real>(
    spline: &TrajectorySpline<T>,
    segment: usize,
    entry: &FilterState<T>,
    cfg: &FilterConfig<T>,
    policy: UpdatePolicy<T>,
) -> Result<SegmentTrace<T>, FilterError> {
    cfg.validate()?;
    if segment >= spline.segment_count() {
        return Err(FilterError::NoSuchSegment(segment));
    }
    let (start, end) = (spline.knots()[segment], spline.knots()[segment + 1]);
    let tol = lit::<T>(1e-9) * start.abs().max(T::one());
    if (entry.t - start).abs() > tol {
        return Err(FilterError::EntryTimeMismatch {
            state_t: to_f64(entry.t),
            segment_start: to_f64(start),
        });
    }

    let (times, oversized) = step_times(start, end, cfg.dt);
    let warning = oversized.then(|| {
        let msg = format!(
            "dt = {} exceeds segment {segment} duration {}; taking a single step",
            cfg.dt,
            end - start
        );
        log::warn!("{msg}");
        msg
    });

    let mut state = FilterState {
        t: start,
        ..entry.clone()
    };
    let mut steps = Vec::with_capacity(times.len() - 1);
    for (i, w) in times.windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        let p = progress(spline, segment, t0, cfg.progress_mode)?;
        let u = spline.velocity_at(t0)?;
        let mut predicted = predict_step(&state, &u, h, cfg.sigma_a2)?;
        predicted.t = t1;
        let z = spline.position_at(t1)?;

        let (blend, q) = match policy {
            UpdatePolicy::Blended => {
                let sigma = sigmoid_blend(p, cfg.k_gain, cfg.lpa);
                (sigma, Some(blend_noise(sigma, cfg)))
            }
            UpdatePolicy::Gated { fraction } if p < fraction => (T::one(), None),
            UpdatePolicy::Gated { .. } => (T::zero(), Some(cfg.q_min())),
        };
        let (next, gain, q_scale) = match q {
            Some(q) => {
                let out = update(&predicted, &z, &q)?;
                (out.state, out.gain, q.trace() / lit(3.0))
            }
            None => (predicted, Matrix6x3::zeros(), lit(f64::INFINITY)),
        };
        if !next.mean.iter().chain(next.covariance.iter()).all(|v| v.is_finite()) {
            return Err(FilterError::NonFinite { segment, step: i + 1 });
        }
        steps.push(StepRecord {
            step: i + 1,
            t: t1,
            dt: h,
            progress: p,
            blend,
            q_scale,
            control: u,
            measurement: z,
            gain,
            q,
            mean: next.mean,
            covariance: next.covariance,
        });
        state = next;
    }

    Ok(SegmentTrace {
        segment,
        start_time: start,
        end_time: end,
        entry: entry.clone(),
        steps,
        warning,
    })
}

fn check_plan<T: Real>(spline: &TrajectorySpline<T>, plan: &LocalPlan<T>) -> Result<(), FilterError> {
    let same = spline.knots().len() == plan.len()
        && spline
            .knots()
            .iter()
            .zip(plan.points())
            .all(|(&k, p)| k == p.t);
    if same {
        Ok(())
    } else {
        Err(FilterError::PlanMismatch(
            "knot times differ from plan times".into(),
        ))
    }
}

/// Propagates the blended filter across every segment, chaining exit to entry.
pub fn propagate_plan<T: Real>(
    spline: &TrajectorySpline<T>,
    plan: &LocalPlan<T>,
    cfg: &FilterConfig<T>,
) -> Result<Vec<SegmentTrace<T>>, FilterError> {
    propagate_plan_with(spline, plan, cfg, UpdatePolicy::Blended)
}

pub fn propagate_plan_with<T: Real>(
    spline: &TrajectorySpline<T>,
    plan: &LocalPlan<T>,
    cfg: &FilterConfig<T>,
    policy: UpdatePolicy<T>,
) -> Result<Vec<SegmentTrace<T>>, FilterError> {
    check_plan(spline, plan)?;
    let first = &plan.points()[0];
    let mut state = FilterState::at_rest(first.position, first.t);
    let mut traces = Vec::with_capacity(spline.segment_count());
    for segment in 0..spline.segment_count() {
        let trace = propagate_segment_with(spline, segment, &state, cfg, policy)?;
        state = trace.exit();
        traces.push(trace);
    }
    Ok(traces)
}

/// Writes the per-step trace: segment, step, t, p, sigma_blend, q_scale, mean (6),
/// covariance diagonal (6) and covariance trace.
pub fn write_trace_csv<T: Real, W: Write>(
    traces: &[SegmentTrace<T>],
    out: W,
) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "segment", "step", "t", "p", "sigma_blend", "q_scale", "x", "y", "z", "vx", "vy", "vz",
        "var_x", "var_y", "var_z", "var_vx", "var_vy", "var_vz", "trace",
    ])?;
    for trace in traces {
        for s in &trace.steps {
            let mut row = vec![
                trace.segment.to_string(),
                s.step.to_string(),
                s.t.to_string(),
                s.progress.to_string(),
                s.blend.to_string(),
                s.q_scale.to_string(),
            ];
            row.extend(s.mean.iter().map(|v| v.to_string()));
            row.extend(s.covariance.diagonal().iter().map(|v| v.to_string()));
            row.push(s.covariance.trace().to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::fit_trajectory;

    fn straight(duration: f64) -> (LocalPlan<f64>, TrajectorySpline<f64>) {
        let plan = LocalPlan::from_xyzt(&[(0.0, 0.0, 0.0, 0.0), (10.0 * duration, 0.0, 0.0, duration)])
            .unwrap();
        let spline = fit_trajectory(&plan).unwrap();
        (plan, spline)
    }

    #[test]
    fn step_times_cover_partial_steps() {
        let (t, warn) = step_times(0.0f64, 2.5, 1.0);
        assert_eq!(t, vec![0.0, 1.0, 2.0, 2.5]);
        assert!(!warn);
        let (t, _) = step_times(10.0f64, 13.0, 1.0);
        assert_eq!(t, vec![10.0, 11.0, 12.0, 13.0]);
        let (t, warn) = step_times(0.0f64, 0.5, 1.0);
        assert_eq!(t, vec![0.0, 0.5]);
        assert!(warn);
    }

    #[test]
    fn oversized_dt_takes_single_step_with_warning() {
        let (_, spline) = straight(5.0);
        let cfg = FilterConfig { dt: 10.0, ..FilterConfig::default() };
        let entry = FilterState::at_rest(Vector3::zeros(), 0.0);
        let trace = propagate_segment(&spline, 0, &entry, &cfg).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.warning.is_some());
        assert_eq!(trace.exit().t, 5.0);
    }

    #[test]
    fn records_progress_and_stride() {
        let (_, spline) = straight(60.0);
        let entry = FilterState::at_rest(Vector3::zeros(), 0.0);
        let trace = propagate_segment(&spline, 0, &entry, &FilterConfig::default()).unwrap();
        assert_eq!(trace.steps.len(), 60);
        for (i, s) in trace.steps.iter().enumerate() {
            assert_eq!(s.t, (i + 1) as f64);
            assert_eq!(s.progress, i as f64 / 60.0);
            assert!((0.0..=1.0).contains(&s.progress));
        }
    }

    #[test]
    fn entry_time_must_match_segment_start() {
        let (_, spline) = straight(60.0);
        let entry = FilterState::at_rest(Vector3::zeros(), 3.0);
        let err = propagate_segment(&spline, 0, &entry, &FilterConfig::default()).unwrap_err();
        assert!(matches!(err, FilterError::EntryTimeMismatch { .. }));
        assert!(matches!(
            propagate_segment(&spline, 1, &entry, &FilterConfig::default()),
            Err(FilterError::NoSuchSegment(1))
        ));
    }

    #[test]
    fn gated_policy_skips_updates_before_fraction() {
        let (_, spline) = straight(60.0);
        let entry = FilterState::at_rest(Vector3::zeros(), 0.0);
        let trace = propagate_segment_with(
            &spline,
            0,
            &entry,
            &FilterConfig::default(),
            UpdatePolicy::Gated { fraction: 2.0 / 3.0 },
        )
        .unwrap();
        for s in &trace.steps {
            assert_eq!(s.q.is_some(), s.progress >= 2.0 / 3.0);
        }
    }

    #[test]
    fn distance_progress_matches_time_on_constant_speed() {
        let (_, spline) = straight(60.0);
        let entry = FilterState::at_rest(Vector3::zeros(), 0.0);
        let cfg = FilterConfig {
            progress_mode: ProgressMode::Distance,
            ..FilterConfig::default()
        };
        let trace = propagate_segment(&spline, 0, &entry, &cfg).unwrap();
        for s in &trace.steps {
            assert!((s.progress - (s.t - 1.0) / 60.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_csv_has_one_row_per_step() {
        let (plan, spline) = straight(10.0);
        let traces = propagate_plan(&spline, &plan, &FilterConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&traces, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.lines().next().unwrap().ends_with("var_vz,trace"));
    }
}
