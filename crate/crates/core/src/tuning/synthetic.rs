//! Synthetic plans and ADS-B tracks with known statistics.
//!
//! Each flight follows a random multi-segment plan at constant speed. Its track is the fitted
//! trajectory, optionally time-warped so the final waypoint is reached `Δ` seconds late (or
//! early), plus i.i.d. Gaussian position noise, converted back to geodetic coordinates and
//! sampled at a fixed rate on a clock with an unknown departure offset.
//!
//! With no warp the deviation covariance is exactly `noise_sigma² · I`. With
//! `ArrivalSpread::Predicted` the lateness is drawn from the model's own predicted arrival
//! distribution at the final waypoint, so predicted bounds should cover it at their nominal
//! confidence.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AdsbSample, AdsbTrack, TuningError, TuningFlight};
use crate::filter::{propagate_plan, FilterConfig};
use crate::geo::{to_local_frame, FlightPlan, GeoWaypoint};
use crate::rta::{estimate_rtas, RtaConfig};
use crate::spline::fit_trajectory;

/// How the actual final arrival differs from the plan.
#[derive(Clone, Debug, PartialEq)]
pub enum ArrivalSpread {
    /// Flown exactly on schedule.
    OnTime,
    /// Lateness drawn from `N(0, σ²)` with σ² the final-waypoint variance predicted under
    /// these settings.
    Predicted {
        filter: FilterConfig<f64>,
        rta: RtaConfig<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub flights: usize,
    pub segments: usize,
    pub segment_duration_s: f64,
    pub speed_mps: f64,
    /// Per-axis position noise, meters.
    pub noise_sigma_m: f64,
    pub sample_interval_s: f64,
    pub spread: ArrivalSpread,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            flights: 20,
            segments: 4,
            segment_duration_s: 250.0,
            speed_mps: 30.0,
            noise_sigma_m: 10.0,
            sample_interval_s: 1.0,
            spread: ArrivalSpread::OnTime,
            seed: 0,
            id_prefix: "SYN".into(),
        }
    }
}

/// A generated flight and the ground truth behind it.
#[derive(Clone, Debug)]
pub struct SyntheticFlight {
    pub flight: TuningFlight,
    /// Seconds late at the final waypoint (negative: early).
    pub lateness_s: f64,
    /// Predicted final-waypoint variance used to draw the lateness (0 when on time).
    pub predicted_variance_s2: f64,
}

fn random_plan(id: &str, rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Result<FlightPlan, TuningError> {
    let origin = GeoWaypoint {
        latitude: 40.0 + rng.gen_range(-0.5..0.5),
        longitude: -105.0 + rng.gen_range(-0.5..0.5),
        altitude: 1_500.0 + rng.gen_range(0.0..500.0),
        rta: 1.7e9 + rng.gen_range(0.0..86_400.0f64).floor(),
    };
    let frame = crate::geo::EnuFrame::new(origin);
    let leg = spec.speed_mps * spec.segment_duration_s;
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut p = Vector3::zeros();
    let mut waypoints = vec![origin];
    for k in 1..=spec.segments {
        if k > 1 {
            heading += rng.gen_range(-1.0..1.0);
        }
        let climb = rng.gen_range(-30.0..30.0);
        let horizontal = (leg * leg - climb * climb).sqrt();
        p += Vector3::new(horizontal * heading.sin(), horizontal * heading.cos(), climb);
        let (latitude, longitude, altitude) = frame.to_geodetic(&p);
        waypoints.push(GeoWaypoint {
            latitude,
            longitude,
            altitude,
            rta: origin.rta + k as f64 * spec.segment_duration_s,
        });
    }
    Ok(FlightPlan::new(id, waypoints)?)
}

/// Generates `spec.flights` flights; flight `i` depends only on `(seed, i)`.
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<SyntheticFlight>, TuningError> {
    (0..spec.flights).map(|i| synthetic_flight(spec, i)).collect()
}

pub fn synthetic_flight(spec: &SyntheticSpec, index: usize) -> Result<SyntheticFlight, TuningError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let id = format!("{}{:04}", spec.id_prefix, index);
    let plan = random_plan(&id, &mut rng, spec)?;
    let local = to_local_frame(&plan);
    let spline = fit_trajectory(&local)?;
    let horizon = local.duration();

    let (lateness, predicted) = match &spec.spread {
        ArrivalSpread::OnTime => (0.0, 0.0),
        ArrivalSpread::Predicted { filter, rta } => {
            let traces = propagate_plan(&spline, &local, filter)?;
            let est = estimate_rtas(&local, &traces, rta)?;
            let var = est.last().map_or(0.0, |e| e.time_variance);
            (var.sqrt() * rng.sample::<f64, _>(StandardNormal), var)
        }
    };
    // Track clock s ↦ plan time s · T / (T + Δ); past the end, continue at the final velocity.
    let flown = horizon + lateness;
    let rate = horizon / flown;
    let end = spline.position_at(horizon)?;
    let v_end = spline.velocity_at(horizon)?;
    let departure = local.origin().rta + rng.gen_range(-600.0..600.0);
    let frame = local.frame();
    let span = flown + 60.0;
    let n = (span / spec.sample_interval_s).floor() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let s = j as f64 * spec.sample_interval_s;
        let nominal = if s <= flown {
            spline.position_at((s * rate).min(horizon))?
        } else {
            end + v_end * (s - flown) * rate
        };
        let noise = Vector3::from_fn(|_, _| spec.noise_sigma_m * rng.sample::<f64, _>(StandardNormal));
        let (latitude, longitude, altitude) = frame.to_geodetic(&(nominal + noise));
        samples.push(AdsbSample {
            t: departure + s,
            latitude,
            longitude,
            altitude,
            ground_speed: Some(spec.speed_mps * rate),
        });
    }
    Ok(SyntheticFlight {
        flight: TuningFlight {
            plan,
            track: AdsbTrack::new(id, samples)?,
        },
        lateness_s: lateness,
        predicted_variance_s2: predicted,
    })
}
