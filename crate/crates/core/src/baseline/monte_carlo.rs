//! Monte Carlo simulation of the linear-Gaussian system the filter describes.
//!
//! Every sample is an aircraft flying the plan: it integrates the commanded velocity, picks
//! up white-noise acceleration drawn from R and is corrected towards a planned position
//! perturbed by noise drawn from the step's Q, through the same gain schedule the filter
//! computed. The empirical covariance of the samples therefore converges to the filter
//! covariance, which makes this an independent check of the covariance recursion.
//!
//! Sample `i` draws from a ChaCha8 stream `(seed, i)`, samples are simulated in fixed chunks
//! and chunk moments are combined in order with compensated sums, so results are
//! bit-identical for a given seed regardless of thread count.

use std::io::Write;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::filter::{
    control_matrix, propagate_plan_with, transition_matrix, FilterConfig, FilterError,
    SegmentTrace, UpdatePolicy,
};
use crate::geo::LocalPlan;
use crate::scalar::{lit, CompensatedSum, Real};
use crate::spline::TrajectorySpline;

const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig<T: Real> {
    pub samples: usize,
    pub seed: u64,
    /// Standard deviation of a per-sample multiplicative error on the control input.
    pub control_error_rel: T,
    /// Extra simulated time after the last waypoint for late samples to arrive, seconds.
    pub overrun: Option<T>,
}

impl<T: Real> Default for McConfig<T> {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            control_error_rel: T::zero(),
            overrun: None,
        }
    }
}

/// Empirical moments after one filter step.
#[derive(Clone, Debug, PartialEq)]
pub struct McStep<T: Real> {
    pub segment: usize,
    pub step: usize,
    pub t: T,
    pub mean: Vector6<T>,
    pub covariance: Matrix6<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McResult<T: Real> {
    pub samples: usize,
    pub steps: Vec<McStep<T>>,
    /// Index into `steps` of each waypoint passage (waypoint k ≥ 1 at `waypoint_steps[k - 1]`).
    pub waypoint_steps: Vec<usize>,
    /// Arrival times (seconds since plan epoch) at waypoints 1.., in sample order.
    pub arrivals: Vec<Vec<T>>,
    /// Samples that never crossed each waypoint within the simulated horizon.
    pub missed: Vec<usize>,
    /// The filter run whose gain schedule was simulated.
    pub filter: Vec<SegmentTrace<T>>,
}

impl<T: Real> McResult<T> {
    /// Empirical covariance at the passage of waypoint `k ≥ 1`.
    pub fn waypoint_covariance(&self, k: usize) -> &Matrix6<T> {
        &self.steps[self.waypoint_steps[k - 1]].covariance
    }
}

/// Relative Frobenius distance `‖a - b‖_F / ‖b‖_F`.
pub fn relative_frobenius<T: Real>(a: &Matrix6<T>, b: &Matrix6<T>) -> T {
    (a - b).norm() / b.norm()
}

struct StepPlan<T: Real> {
    h: T,
    t0: T,
    u: Vector3<T>,
    z: Vector3<T>,
    gain: nalgebra::Matrix6x3<T>,
    q_chol: Option<Matrix3<T>>,
    reference: Vector6<T>,
    segment: usize,
}

struct ChunkOut<T: Real> {
    /// Per step: Σd (6) followed by the upper triangle of Σddᵀ (21).
    sums: Vec<[T; 27]>,
    arrivals: Vec<Vec<Option<T>>>,
}

fn lower_cholesky<T: Real>(q: &Matrix3<T>) -> Result<Matrix3<T>, FilterError> {
    q.cholesky()
        .map(|c| c.l())
        .ok_or(FilterError::SingularInnovation)
}

#[inline]
fn normal3<T: Real, R: Rng>(rng: &mut R) -> Vector3<T>
where
    StandardNormal: Distribution<T>,
{
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Runs the filter under `policy`, then simulates `mc.samples` trajectories through the same
/// gain schedule.
pub fn monte_carlo_oracle<T: Real>(
    spline: &TrajectorySpline<T>,
    plan: &LocalPlan<T>,
    cfg: &FilterConfig<T>,
    policy: UpdatePolicy<T>,
    mc: &McConfig<T>,
) -> Result<McResult<T>, FilterError>
where
    StandardNormal: Distribution<T>,
{
    if mc.samples < 2 {
        return Err(FilterError::InvalidConfig(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let filter = propagate_plan_with(spline, plan, cfg, policy)?;

    let mut schedule = Vec::new();
    let mut waypoint_steps = Vec::with_capacity(filter.len());
    for trace in &filter {
        let mut t0 = trace.start_time;
        for s in &trace.steps {
            schedule.push(StepPlan {
                h: s.dt,
                t0,
                u: s.control,
                z: s.measurement,
                gain: s.gain,
                q_chol: s.q.as_ref().map(lower_cholesky).transpose()?,
                reference: s.mean,
                segment: trace.segment,
            });
            t0 = s.t;
        }
        waypoint_steps.push(schedule.len() - 1);
    }

    // Arrival planes: waypoint k ≥ 1 with normal along segment k.
    let pts = plan.points();
    let planes: Vec<(Vector3<T>, Vector3<T>)> = pts
        .windows(2)
        .map(|w| (w[1].position, (w[1].position - w[0].position).normalize()))
        .collect();
    let last = plan.len() - 2;
    let final_velocity = spline.velocity_at(plan.duration())?;
    let overrun = mc.overrun.unwrap_or_else(|| {
        let seg = pts[last + 1].t - pts[last].t;
        (seg * lit(0.5)).max(lit(60.0))
    });
    let overrun_steps = (crate::scalar::to_f64(overrun / cfg.dt).ceil() as usize).max(1);

    let start = pts[0].position;
    let sigma_a = cfg.sigma_a2.sqrt();
    let half = lit::<T>(0.5);
    let epoch = lit::<T>(plan.origin().rta);

    let chunks: Vec<(usize, usize)> = (0..mc.samples)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(mc.samples)))
        .collect();

    let outs: Vec<ChunkOut<T>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = vec![[T::zero(); 27]; schedule.len()];
            let mut arrivals = vec![Vec::with_capacity(hi - lo); planes.len()];
            for sample in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
                rng.set_stream(sample as u64);
                let scale = if mc.control_error_rel > T::zero() {
                    T::one() + mc.control_error_rel * rng.sample::<T, _>(StandardNormal)
                } else {
                    T::one()
                };
                let mut x = Vector6::zeros();
                x.fixed_rows_mut::<3>(0).copy_from(&start);
                let mut crossed: Vec<Option<T>> = vec![None; planes.len()];
                let mut prev_side: Vec<T> = planes.iter().map(|(p, n)| (start - p).dot(n)).collect();

                let step_once = |x: &mut Vector6<T>,
                                     rng: &mut ChaCha8Rng,
                                     h: T,
                                     u: &Vector3<T>,
                                     correction: Option<(&StepPlan<T>, &Matrix3<T>)>| {
                    let a = normal3::<T, _>(rng) * sigma_a;
                    let mut next = transition_matrix(h) * *x + control_matrix(h) * (u * scale);
                    for i in 0..3 {
                        next[i] += half * h * h * a[i];
                        next[i + 3] += h * a[i];
                    }
                    if let Some((sp, l)) = correction {
                        let z = sp.z + l * normal3::<T, _>(rng);
                        let innovation = z - next.fixed_rows::<3>(0);
                        next += sp.gain * innovation;
                    }
                    *x = next;
                };

                let detect = |x: &Vector6<T>, t0: T, h: T, active: usize, crossed: &mut [Option<T>], prev: &mut [T]| {
                    let pos = x.fixed_rows::<3>(0).into_owned();
                    for k in 0..=active.min(planes.len() - 1) {
                        if crossed[k].is_some() {
                            continue;
                        }
                        let (p, n) = &planes[k];
                        let side = (pos - p).dot(n);
                        if side >= T::zero() {
                            let before = prev[k];
                            let frac = if before < T::zero() { -before / (side - before) } else { T::zero() };
                            crossed[k] = Some(epoch + t0 + frac * h);
                        }
                        prev[k] = side;
                    }
                };

                for (i, sp) in schedule.iter().enumerate() {
                    let correction = sp.q_chol.as_ref().map(|l| (sp, l));
                    step_once(&mut x, &mut rng, sp.h, &sp.u, correction);
                    detect(&x, sp.t0, sp.h, sp.segment, &mut crossed, &mut prev_side);
                    let d = x - sp.reference;
                    let acc = &mut sums[i];
                    for r in 0..6 {
                        acc[r] += d[r];
                    }
                    let mut idx = 6;
                    for r in 0..6 {
                        for c in r..6 {
                            acc[idx] += d[r] * d[c];
                            idx += 1;
                        }
                    }
                }
                let mut t0 = plan.duration();
                for _ in 0..overrun_steps {
                    if crossed.iter().all(Option::is_some) {
                        break;
                    }
                    step_once(&mut x, &mut rng, cfg.dt, &final_velocity, None);
                    detect(&x, t0, cfg.dt, planes.len() - 1, &mut crossed, &mut prev_side);
                    t0 += cfg.dt;
                }
                for (k, c) in crossed.into_iter().enumerate() {
                    arrivals[k].push(c);
                }
            }
            ChunkOut { sums, arrivals }
        })
        .collect();

    let n = lit::<T>(mc.samples as f64);
    let mut steps = Vec::with_capacity(schedule.len());
    let mut step_in_segment = 0usize;
    let mut current_segment = usize::MAX;
    for (i, sp) in schedule.iter().enumerate() {
        let mut acc = [CompensatedSum::<T>::default(); 27];
        for out in &outs {
            for (a, v) in acc.iter_mut().zip(out.sums[i].iter()) {
                a.add(*v);
            }
        }
        let mean_dev = Vector6::from_fn(|r, _| acc[r].value() / n);
        let mut cov = Matrix6::zeros();
        let mut idx = 6;
        for r in 0..6 {
            for c in r..6 {
                let v = (acc[idx].value() - n * mean_dev[r] * mean_dev[c]) / (n - T::one());
                cov[(r, c)] = v;
                cov[(c, r)] = v;
                idx += 1;
            }
        }
        if sp.segment != current_segment {
            current_segment = sp.segment;
            step_in_segment = 0;
        }
        step_in_segment += 1;
        steps.push(McStep {
            segment: sp.segment,
            step: step_in_segment,
            t: sp.t0 + sp.h,
            mean: sp.reference + mean_dev,
            covariance: cov,
        });
    }

    let mut arrivals = vec![Vec::with_capacity(mc.samples); planes.len()];
    let mut missed = vec![0usize; planes.len()];
    for out in outs {
        for (k, list) in out.arrivals.into_iter().enumerate() {
            for a in list {
                match a {
                    Some(t) => arrivals[k].push(t),
                    None => missed[k] += 1,
                }
            }
        }
    }

    Ok(McResult {
        samples: mc.samples,
        steps,
        waypoint_steps,
        arrivals,
        missed,
        filter,
    })
}

/// Writes per-step empirical means and covariance diagonals.
pub fn write_mc_csv<T: Real, W: Write>(result: &McResult<T>, out: W) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "segment", "step", "t", "x", "y", "z", "vx", "vy", "vz", "var_x", "var_y", "var_z",
        "var_vx", "var_vy", "var_vz", "trace",
    ])?;
    for s in &result.steps {
        let mut row = vec![s.segment.to_string(), s.step.to_string(), s.t.to_string()];
        row.extend(s.mean.iter().map(|v| v.to_string()));
        row.extend(s.covariance.diagonal().iter().map(|v| v.to_string()));
        row.push(s.covariance.trace().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the arrival-time samples of one waypoint, one per line.
pub fn write_arrivals_csv<T: Real, W: Write>(
    arrivals: &[T],
    out: W,
) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arrival_s"])?;
    for a in arrivals {
        w.write_record([a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
