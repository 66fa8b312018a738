//! Monotone piecewise cubic Hermite (PCHIP) fit of a local plan, one interpolant per axis.
//!
//! Slopes follow the Fritsch–Carlson shape-preserving rule: the weighted harmonic mean of
//! adjacent secants at interior knots (zero at local extrema), and the one-sided three-point
//! formula with the monotonicity clamp at the two ends. Two-knot plans reduce to straight
//! lines. Velocity of the fit is the filter's control input and position is its measurement.

use std::io::Write;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geo::LocalPlan;
use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("need at least 2 knots, found {0}")]
    TooFewKnots(usize),
    #[error("knot times not strictly increasing at index {0}")]
    DuplicateKnot(usize),
    #[error("t = {t} outside spline domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },
}

/// Per-axis cubic Hermite interpolant of position against time.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpline<T: Real> {
    knots: Vec<T>,
    values: Vec<Vector3<T>>,
    slopes: Vec<Vector3<T>>,
}

/// Shape-preserving derivative estimates for one axis.
fn pchip_slopes<T: Real>(h: &[T], delta: &[T]) -> Vec<T> {
    let n = h.len() + 1;
    let zero = T::zero();
    let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![zero; n];
    for k in 1..n - 1 {
        let (s0, s1) = (delta[k - 1], delta[k]);
        if s0 * s1 <= zero {
            continue;
        }
        let w0 = two * h[k] + h[k - 1];
        let w1 = h[k] + two * h[k - 1];
        d[k] = (w0 + w1) / (w0 / s0 + w1 / s1);
    }
    let edge = |h0: T, h1: T, s0: T, s1: T| {
        let d = ((two * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
        if d * s0 <= zero {
            zero
        } else if s0 * s1 < zero && d.abs() > three * s0.abs() {
            three * s0
        } else {
            d
        }
    };
    d[0] = edge(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

impl<T: Real> TrajectorySpline<T> {
    /// Fits from raw knots and positions.
    pub fn from_knots(knots: Vec<T>, values: Vec<Vector3<T>>) -> Result<Self, SplineError> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(SplineError::TooFewKnots(n.min(values.len())));
        }
        let mut h = Vec::with_capacity(n - 1);
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SplineError::DuplicateKnot(i + 1));
            }
            h.push(w[1] - w[0]);
        }
        let mut slopes = vec![Vector3::zeros(); n];
        for axis in 0..3 {
            let delta: Vec<T> = values
                .windows(2)
                .zip(&h)
                .map(|(v, &hk)| (v[1][axis] - v[0][axis]) / hk)
                .collect();
            for (s, d) in slopes.iter_mut().zip(pchip_slopes(&h, &delta)) {
                s[axis] = d;
            }
        }
        Ok(Self {
            knots,
            values,
            slopes,
        })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Knot positions (the waypoints).
    pub fn values(&self) -> &[Vector3<T>] {
        &self.values
    }

    /// Endpoint derivatives at each knot.
    pub fn slopes(&self) -> &[Vector3<T>] {
        &self.slopes
    }

    pub fn segment_count(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn start(&self) -> T {
        self.knots[0]
    }

    pub fn end(&self) -> T {
        self.knots[self.knots.len() - 1]
    }

    /// Segment index containing `t` (right segment at interior knots) and the local offset.
    fn locate(&self, t: T) -> Result<(usize, T), SplineError> {
        let (start, end) = (self.start(), self.end());
        let slack = lit::<T>(64.0) * T::default_epsilon() * end.abs().max(start.abs()).max(T::one());
        if !(t >= start - slack && t <= end + slack) {
            return Err(SplineError::OutOfDomain {
                t: crate::scalar::to_f64(t),
                start: crate::scalar::to_f64(start),
                end: crate::scalar::to_f64(end),
            });
        }
        let t = t.clamp(start, end);
        let k = self
            .knots
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(self.knots.len() - 2);
        Ok((k, t - self.knots[k]))
    }

    /// Power-basis coefficients of segment `k` in local time, per axis.
    fn coefficients(&self, k: usize) -> [Vector3<T>; 4] {
        let h = self.knots[k + 1] - self.knots[k];
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        let delta = (y1 - y0) / h;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        [
            y0,
            d0,
            (delta * three - d0 * two - d1) / h,
            (d0 + d1 - delta * two) / (h * h),
        ]
    }

    pub fn position_at(&self, t: T) -> Result<Vector3<T>, SplineError> {
        let (k, tau) = self.locate(t)?;
        if tau == T::zero() {
            return Ok(self.values[k]);
        }
        let [c0, c1, c2, c3] = self.coefficients(k);
        Ok(c0 + (c1 + (c2 + c3 * tau) * tau) * tau)
    }

    pub fn velocity_at(&self, t: T) -> Result<Vector3<T>, SplineError> {
        let (k, tau) = self.locate(t)?;
        let [_, c1, c2, c3] = self.coefficients(k);
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        Ok(c1 + (c2 * two + c3 * (three * tau)) * tau)
    }

    /// Second derivative; at interior knots the right segment's value is returned.
    pub fn acceleration_at(&self, t: T) -> Result<Vector3<T>, SplineError> {
        let (k, tau) = self.locate(t)?;
        let [_, _, c2, c3] = self.coefficients(k);
        Ok(c2 * lit::<T>(2.0) + c3 * (lit::<T>(6.0) * tau))
    }

    /// Writes `t,x,y,z,vx,vy,vz,ax,ay,az` rows at a fixed stride, always including the last knot.
    pub fn write_csv<W: Write>(&self, stride: T, out: W) -> Result<(), crate::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
        let (start, end) = (self.start(), self.end());
        let mut i = 0usize;
        loop {
            let t = (start + stride * lit(i as f64)).min(end);
            let (p, v, a) = (
                self.position_at(t)?,
                self.velocity_at(t)?,
                self.acceleration_at(t)?,
            );
            let mut row = vec![t.to_string()];
            row.extend(p.iter().chain(v.iter()).chain(a.iter()).map(|c| c.to_string()));
            w.write_record(&row)?;
            if t >= end {
                break;
            }
            i += 1;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits the trajectory spline through every point of a local plan.
pub fn fit_trajectory<T: Real>(plan: &LocalPlan<T>) -> Result<TrajectorySpline<T>, SplineError> {
    let (knots, values) = plan.points().iter().map(|p| (p.t, p.position)).unzip();
    TrajectorySpline::from_knots(knots, values)
}
