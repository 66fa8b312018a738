//! Linear Kalman filter with a sigmoid-blended measurement-noise covariance.
//!
//! The planned position is fed back as the measurement at every step, and how much it is
//! trusted follows the progress `p` through the current segment:
//! `Q(p) = Q_min + (Q_max - Q_min) / (1 + exp(k (p - lpa)))`. Far from the next waypoint
//! `Q ≈ Q_max`, the gain is tiny and covariance grows; near it the gain rises and the
//! covariance contracts, mimicking an FMS closing on its RTA.
//!
//! Naming note: in this crate **Q is measurement noise and R is process noise**.

mod model;
mod propagate;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use thiserror::Error;

pub use model::{
    control_matrix, measurement_matrix, measurement_noise, predict, predict_step, process_noise,
    sigmoid_blend, transition_matrix, update, UpdateOutcome,
};
pub use propagate::{
    position_std, position_std_series, propagate_plan, propagate_plan_with, propagate_segment,
    propagate_segment_with, step_changes, write_trace_csv, SegmentTrace, StepRecord, UpdatePolicy,
};

use crate::scalar::{lit, Real};
use crate::spline::SplineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("process noise variance must be non-negative, got {0}")]
    NegativeProcessNoise(f64),
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("state became non-finite in segment {segment} at step {step}")]
    NonFinite { segment: usize, step: usize },
    #[error("entry state at t = {state_t} does not match segment start {segment_start}")]
    EntryTimeMismatch { state_t: f64, segment_start: f64 },
    #[error("segment index {0} out of range")]
    NoSuchSegment(usize),
    #[error("spline does not match plan: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// How the progress ratio through a segment is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ProgressMode {
    /// Elapsed segment time over segment duration.
    #[default]
    Time,
    /// Planned position projected onto the segment chord, over the chord length.
    Distance,
}

/// Filter tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig<T: Real> {
    /// Step, seconds.
    pub dt: T,
    /// Acceleration noise variance σ_a², m²/s⁴.
    pub sigma_a2: T,
    /// Q_max = q_max_scale · I unless `q_max_matrix` is set.
    pub q_max_scale: T,
    /// Q_min = q_min_scale · I.
    pub q_min_scale: T,
    /// Full Q_max, e.g. estimated from flight data.
    pub q_max_matrix: Option<Matrix3<T>>,
    pub k_gain: T,
    /// Activation threshold of the sigmoid, in [0, 1).
    pub lpa: T,
    pub progress_mode: ProgressMode,
}

impl<T: Real> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::one(),
            sigma_a2: T::one(),
            q_max_scale: lit(1e8),
            q_min_scale: T::one(),
            q_max_matrix: None,
            k_gain: lit(10.0),
            lpa: T::zero(),
            progress_mode: ProgressMode::Time,
        }
    }
}

impl<T: Real> FilterConfig<T> {
    pub fn q_max(&self) -> Matrix3<T> {
        self.q_max_matrix
            .unwrap_or_else(|| Matrix3::identity() * self.q_max_scale)
    }

    pub fn q_min(&self) -> Matrix3<T> {
        Matrix3::identity() * self.q_min_scale
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |msg: String| Err(FilterError::InvalidConfig(msg));
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.sigma_a2 >= T::zero()) || !self.sigma_a2.is_finite() {
            return bad(format!("sigma_a2 must be non-negative, got {}", self.sigma_a2));
        }
        if !(self.q_min_scale > T::zero()) || !(self.q_max_scale >= self.q_min_scale) {
            return bad(format!(
                "need q_max_scale >= q_min_scale > 0, got {} and {}",
                self.q_max_scale, self.q_min_scale
            ));
        }
        if !self.q_max_scale.is_finite() {
            return bad("q_max_scale must be finite".into());
        }
        if !(self.lpa >= T::zero() && self.lpa < T::one()) {
            return bad(format!("lpa must lie in [0, 1), got {}", self.lpa));
        }
        if !self.k_gain.is_finite() {
            return bad("k_gain must be finite".into());
        }
        if let Some(m) = &self.q_max_matrix {
            if (m - m.transpose()).amax() > lit::<T>(1e-9) * m.amax() {
                return bad("q_max_matrix must be symmetric".into());
            }
            let min_eig = m.symmetric_eigenvalues().min();
            if !(min_eig >= self.q_min_scale) {
                return bad(format!(
                    "q_max_matrix smallest eigenvalue {min_eig} is below q_min_scale {}",
                    self.q_min_scale
                ));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> FilterConfig<U> {
        let c = |x: T| lit::<U>(crate::scalar::to_f64(x));
        FilterConfig {
            dt: c(self.dt),
            sigma_a2: c(self.sigma_a2),
            q_max_scale: c(self.q_max_scale),
            q_min_scale: c(self.q_min_scale),
            q_max_matrix: self.q_max_matrix.map(|m| m.map(c)),
            k_gain: c(self.k_gain),
            lpa: c(self.lpa),
            progress_mode: self.progress_mode,
        }
    }
}

/// Mean `[x, y, z, vx, vy, vz]`, its covariance and the time it refers to.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState<T: Real> {
    pub mean: Vector6<T>,
    pub covariance: Matrix6<T>,
    pub t: T,
}

impl<T: Real> FilterState<T> {
    /// Exactly known position with zero state velocity.
    pub fn at_rest(position: Vector3<T>, t: T) -> Self {
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&position);
        Self {
            mean,
            covariance: Matrix6::zeros(),
            t,
        }
    }

    pub fn position(&self) -> Vector3<T> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn position_covariance(&self) -> Matrix3<T> {
        self.covariance.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Diagonal of the velocity block, m²/s².
    pub fn velocity_variance(&self) -> Vector3<T> {
        Vector3::new(
            self.covariance[(3, 3)],
            self.covariance[(4, 4)],
            self.covariance[(5, 5)],
        )
    }

    /// Symmetric within 1e-9 relative and eigenvalues ≥ -1e-9 · trace (relaxed to a few
    /// ulps for `f32`).
    pub fn covariance_is_valid(&self) -> bool {
        let p = &self.covariance;
        let tol = lit::<T>(1e-9).max(lit::<T>(64.0) * T::default_epsilon());
        let scale = p.amax().max(lit::<T>(1e-30));
        if (p - p.transpose()).amax() > tol * scale {
            return false;
        }
        let floor = -tol * p.trace().abs().max(lit::<T>(1e-30));
        p.symmetric_eigenvalues().iter().all(|&e| e >= floor)
    }
}
