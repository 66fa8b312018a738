//! System matrices and the single-step predict/update recursion.
//!
//! Naming follows the uncertainty-propagation convention used throughout this crate:
//! **Q is the measurement-noise covariance and R is the process-noise covariance**
//! (the reverse of most Kalman filter texts).

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, Vector3, Vector6};

use super::{FilterConfig, FilterError, FilterState};
use crate::scalar::{lit, Real};

/// Constant-velocity transition: position rows pick up `dt` times the velocity columns.
pub fn transition_matrix<T: Real>(dt: T) -> Matrix6<T> {
    let mut a = Matrix6::identity();
    for i in 0..3 {
        a[(i, i + 3)] = dt;
    }
    a
}

/// Control input matrix: the commanded velocity moves position by `dt · u`.
pub fn control_matrix<T: Real>(dt: T) -> Matrix6x3<T> {
    let mut b = Matrix6x3::zeros();
    for i in 0..3 {
        b[(i, i)] = dt;
    }
    b
}

/// Measurement matrix selecting position from the state.
pub fn measurement_matrix<T: Real>() -> Matrix3x6<T> {
    Matrix3x6::identity()
}

/// White-noise-acceleration process covariance (R) for one step.
pub fn process_noise<T: Real>(dt: T, sigma_a2: T) -> Result<Matrix6<T>, FilterError> {
    if !(sigma_a2 >= T::zero()) {
        return Err(FilterError::NegativeProcessNoise(crate::scalar::to_f64(sigma_a2)));
    }
    let dt2 = dt * dt;
    let pos = dt2 * dt2 / lit(4.0) * sigma_a2;
    let cross = dt2 * dt / lit(2.0) * sigma_a2;
    let vel = dt2 * sigma_a2;
    let mut r = Matrix6::zeros();
    for i in 0..3 {
        r[(i, i)] = pos;
        r[(i + 3, i + 3)] = vel;
        r[(i, i + 3)] = cross;
        r[(i + 3, i)] = cross;
    }
    Ok(r)
}

/// Blend weight `1 / (1 + exp(k (p - lpa)))`: near 1 early in a segment, near 0 late.
pub fn sigmoid_blend<T: Real>(p: T, k_gain: T, lpa: T) -> T {
    let x = k_gain * (p - lpa);
    if x > T::zero() {
        let e = (-x).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + x.exp())
    }
}

/// Measurement noise `Q = Q_min + (Q_max - Q_min) · σ(p)`.
pub fn measurement_noise<T: Real>(p: T, cfg: &FilterConfig<T>) -> Matrix3<T> {
    let sigma = sigmoid_blend(p, cfg.k_gain, cfg.lpa);
    blend_noise(sigma, cfg)
}

pub(crate) fn blend_noise<T: Real>(sigma: T, cfg: &FilterConfig<T>) -> Matrix3<T> {
    let q_min = cfg.q_min();
    q_min + (cfg.q_max() - q_min) * sigma
}

#[inline]
fn symmetrize<T: Real>(m: &Matrix6<T>) -> Matrix6<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Time update over an explicit step length `dt`.
pub fn predict_step<T: Real>(
    state: &FilterState<T>,
    u: &Vector3<T>,
    dt: T,
    sigma_a2: T,
) -> Result<FilterState<T>, FilterError> {
    let a = transition_matrix(dt);
    let mean = a * state.mean + control_matrix(dt) * u;
    let covariance = symmetrize(&(a * state.covariance * a.transpose() + process_noise(dt, sigma_a2)?));
    Ok(FilterState {
        mean,
        covariance,
        t: state.t + dt,
    })
}

/// Time update with the configured step.
pub fn predict<T: Real>(
    state: &FilterState<T>,
    u: &Vector3<T>,
    cfg: &FilterConfig<T>,
) -> Result<FilterState<T>, FilterError> {
    predict_step(state, u, cfg.dt, cfg.sigma_a2)
}

/// Result of a measurement update.
#[derive(Clone, Debug)]
pub struct UpdateOutcome<T: Real> {
    pub state: FilterState<T>,
    /// Kalman gain `K = P Cᵀ S⁻¹`.
    pub gain: Matrix6x3<T>,
    pub innovation: Vector3<T>,
}

/// Measurement update against a position `z` with noise `q`; Joseph-form covariance.
pub fn update<T: Real>(
    state: &FilterState<T>,
    z: &Vector3<T>,
    q: &Matrix3<T>,
) -> Result<UpdateOutcome<T>, FilterError> {
    let p = &state.covariance;
    let p_pos = p.fixed_view::<3, 3>(0, 0).into_owned();
    let s = p_pos + q;
    let chol = s.cholesky().ok_or(FilterError::SingularInnovation)?;
    // K = P Cᵀ S⁻¹, and since P and S are symmetric, Kᵀ = S⁻¹ C P.
    let cp: Matrix3x6<T> = p.fixed_view::<3, 6>(0, 0).into_owned();
    let gain = chol.solve(&cp).transpose();
    let innovation = z - state.mean.fixed_rows::<3>(0);
    let mean: Vector6<T> = state.mean + gain * innovation;
    let ikc = Matrix6::identity() - gain * measurement_matrix::<T>();
    let covariance = symmetrize(&(ikc * p * ikc.transpose() + gain * q * gain.transpose()));
    Ok(UpdateOutcome {
        state: FilterState {
            mean,
            covariance,
            t: state.t,
        },
        gain,
        innovation,
    })
}
