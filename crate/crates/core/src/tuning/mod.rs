//! Estimating Q_max from flown tracks and scoring arrival-time predictions.
//!
//! Training flights are aligned to their plans, their position deviations reduced to one
//! covariance per flight, poorly matching flights pruned by RMS, and the survivors averaged.
//! The average is used directly as the filter's Q_max. Verification flights are then
//! propagated with that Q_max and scored on whether the observed final-waypoint arrival falls
//! inside the predicted bounds.

mod adsb;
mod matching;
mod synthetic;

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use adsb::{parse_adsb, write_adsb_csv, AdsbSample, AdsbTrack, IngestReport};
pub use matching::{
    arrival_accuracy, average_covariances, closest_approach_time, extract_covariance,
    match_track_to_plan, observed_arrival_time, project_track, prune_tracks, DeviationSeries,
    LocalTrack, PruneReport, Rejection,
};
pub use synthetic::{synthetic_corpus, synthetic_flight, ArrivalSpread, SyntheticFlight, SyntheticSpec};

use crate::filter::{propagate_plan, FilterConfig, FilterError};
use crate::geo::{parse_flight_plan, to_local_frame, FlightPlan, GeoError};
use crate::rta::{estimate_rtas, RtaConfig, RtaError};
use crate::spline::{fit_trajectory, SplineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuningError {
    #[error("unknown ADS-B column {0:?}")]
    UnknownColumn(String),
    #[error("missing ADS-B column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("track {0:?} has no usable samples")]
    EmptyTrack(String),
    #[error("file mixes flights {first:?} and {other:?}")]
    MixedFlights { first: String, other: String },
    #[error("track {0:?} does not overlap its plan")]
    NoOverlap(String),
    #[error("need at least {needed} samples, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("no flights retained")]
    NoFlightsRetained,
    #[error("{predictions} predictions but {actuals} actual arrivals")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("no flight plan with plan_id {0:?}")]
    MissingPlan(String),
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error("invalid tuning parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Rta(#[from] RtaError),
}

/// A flown track paired with the plan it was filed under.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningFlight {
    pub plan: FlightPlan,
    pub track: AdsbTrack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    /// Flights whose deviation RMS exceeds this are not used for Q_max, meters.
    pub max_rms_m: f64,
    pub train_fraction: f64,
    /// Half-width of the line fits used for alignment and arrival detection, seconds.
    pub align_window_s: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            max_rms_m: 500.0,
            train_fraction: 0.7,
            align_window_s: 10.0,
            seed: 0,
        }
    }
}

/// Seeded shuffle of `0..n` split into (train, verify), each sorted.
pub fn train_verify_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let (a, b) = idx.split_at(n_train.min(n));
    let (mut train, mut verify) = (a.to_vec(), b.to_vec());
    train.sort_unstable();
    verify.sort_unstable();
    (train, verify)
}

type Matrix = [[f64; 3]; 3];

fn rows(m: &Matrix3<f64>) -> Matrix {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlightStats {
    pub flight_id: String,
    pub split: &'static str,
    pub matched_samples: usize,
    pub rms_m: Option<f64>,
    pub covariance_m2: Option<Matrix>,
    pub used_for_q_max: bool,
    /// Why the flight could not be matched at all.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifiedFlight {
    pub flight_id: String,
    pub nominal_s: f64,
    pub lower_s: f64,
    pub upper_s: f64,
    pub observed_s: Option<f64>,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub confidence: f64,
    /// Coverage at the final waypoint, over verification flights with an observed arrival.
    pub final_waypoint_coverage: f64,
    /// Coverage pooled over every waypoint after the first.
    pub all_waypoint_coverage: f64,
    pub flights: usize,
    pub flights_without_arrival: usize,
    pub per_flight: Vec<VerifiedFlight>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuningResult {
    /// Mean of the retained per-flight deviation covariances, m².
    pub q_max_estimate: Matrix,
    /// Estimate with eigenvalues floored at Q_min, as handed to the filter.
    pub q_max_used: Matrix,
    pub flights_used: usize,
    pub per_flight: Vec<FlightStats>,
    pub pruning: PruneReport,
    pub accuracy: Option<AccuracySummary>,
}

impl TuningResult {
    pub fn q_max_estimate(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.q_max_estimate[r][c])
    }

    pub fn q_max_used(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.q_max_used[r][c])
    }
}

/// Symmetrizes and lifts every eigenvalue to at least `floor`.
pub fn floor_eigenvalues(m: &Matrix3<f64>, floor: f64) -> Matrix3<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    eig.eigenvalues.iter_mut().for_each(|e| *e = e.max(floor));
    let out = eig.recompose();
    (out + out.transpose()) * 0.5
}

/// Deviations of one flight against its own plan.
pub fn flight_deviations(flight: &TuningFlight, align_window_s: f64) -> Result<DeviationSeries, TuningError> {
    let local = to_local_frame(&flight.plan);
    let spline = fit_trajectory(&local)?;
    let track = project_track(&flight.track, &local.frame());
    match_track_to_plan(&track, &local, &spline, align_window_s)
}

/// Estimates Q_max from `flights` (all of them; no split).
pub fn estimate_q_max(
    flights: &[TuningFlight],
    cfg: &TuneConfig,
) -> Result<(Matrix3<f64>, Vec<FlightStats>, PruneReport), TuningError> {
    let matched: Vec<Result<DeviationSeries, TuningError>> = flights
        .par_iter()
        .map(|f| flight_deviations(f, cfg.align_window_s))
        .collect();
    let mut stats = Vec::with_capacity(flights.len());
    let mut series = Vec::new();
    for (f, m) in flights.iter().zip(matched) {
        match m {
            Ok(s) => series.push(s),
            Err(e) => stats.push(FlightStats {
                flight_id: f.track.flight_id().to_string(),
                split: "train",
                matched_samples: 0,
                rms_m: None,
                covariance_m2: None,
                used_for_q_max: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let all_stats: Vec<(String, usize, f64)> =
        series.iter().map(|s| (s.flight_id.clone(), s.len(), s.rms())).collect();
    let (kept, report) = prune_tracks(series, cfg.max_rms_m);
    let covs = kept
        .iter()
        .map(extract_covariance)
        .collect::<Result<Vec<_>, _>>()?;
    for (id, n, rms) in all_stats {
        let cov = kept.iter().position(|s| s.flight_id == id).map(|i| rows(&covs[i]));
        stats.push(FlightStats {
            flight_id: id,
            split: "train",
            matched_samples: n,
            rms_m: Some(rms),
            covariance_m2: cov,
            used_for_q_max: cov.is_some(),
            error: None,
        });
    }
    let q = average_covariances(&covs)?;
    Ok((q, stats, report))
}

/// Final-waypoint prediction and observation for one flight under `filter`.
pub fn verify_flight(
    flight: &TuningFlight,
    filter: &FilterConfig<f64>,
    rta: &RtaConfig<f64>,
    align_window_s: f64,
) -> Result<(Vec<crate::rta::RtaEstimate<f64>>, Vec<Option<f64>>), TuningError> {
    let local = to_local_frame(&flight.plan);
    let spline = fit_trajectory(&local)?;
    let traces = propagate_plan(&spline, &local, filter)?;
    let estimates = estimate_rtas(&local, &traces, rta)?;
    let track = project_track(&flight.track, &local.frame());
    let epoch = closest_approach_time(&track, &local.points()[0].position, align_window_s);
    let observed = (1..local.len())
        .map(|k| observed_arrival_time(&track, &local, k, epoch, align_window_s))
        .collect();
    Ok((estimates, observed))
}

/// Coverage of observed arrivals by bounds predicted under `filter`.
pub fn evaluate_coverage(
    flights: &[TuningFlight],
    filter: &FilterConfig<f64>,
    rta: &RtaConfig<f64>,
    align_window_s: f64,
) -> Result<AccuracySummary, TuningError> {
    let results = flights
        .par_iter()
        .map(|f| verify_flight(f, filter, rta, align_window_s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut finals = Vec::new();
    let mut actuals = Vec::new();
    let mut per_flight = Vec::new();
    let (mut pooled_hits, mut pooled_n) = (0usize, 0usize);
    for (f, (est, obs)) in flights.iter().zip(&results) {
        for (e, o) in est[1..].iter().zip(obs) {
            if let Some(o) = o {
                pooled_n += 1;
                pooled_hits += e.contains(*o) as usize;
            }
        }
        let last = est.last().expect("plans have two or more waypoints").clone();
        let observed = *obs.last().expect("at least one segment");
        per_flight.push(VerifiedFlight {
            flight_id: f.track.flight_id().to_string(),
            nominal_s: last.nominal_rta,
            lower_s: last.lower,
            upper_s: last.upper,
            observed_s: observed,
            covered: observed.map_or(false, |o| last.contains(o)),
        });
        if let Some(o) = observed {
            finals.push(last);
            actuals.push(o);
        }
    }
    let missing = flights.len() - actuals.len();
    Ok(AccuracySummary {
        confidence: rta.confidence,
        final_waypoint_coverage: arrival_accuracy(&finals, &actuals)?,
        all_waypoint_coverage: if pooled_n > 0 { pooled_hits as f64 / pooled_n as f64 } else { 0.0 },
        flights: flights.len(),
        flights_without_arrival: missing,
        per_flight,
    })
}

/// Full pipeline: split, estimate Q_max on the training flights, score the verification
/// flights with it.
pub fn tune(
    flights: &[TuningFlight],
    filter: &FilterConfig<f64>,
    rta: &RtaConfig<f64>,
    cfg: &TuneConfig,
) -> Result<TuningResult, TuningError> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0) {
        return Err(TuningError::InvalidParameter(format!(
            "train_fraction must lie in (0, 1], got {}",
            cfg.train_fraction
        )));
    }
    if flights.is_empty() {
        return Err(TuningError::NoFlightsRetained);
    }
    let (train_idx, verify_idx) = train_verify_split(flights.len(), cfg.train_fraction, cfg.seed);
    let train: Vec<TuningFlight> = train_idx.iter().map(|&i| flights[i].clone()).collect();
    let verify: Vec<TuningFlight> = verify_idx.iter().map(|&i| flights[i].clone()).collect();

    let (estimate, mut per_flight, pruning) = estimate_q_max(&train, cfg)?;
    let used = floor_eigenvalues(&estimate, filter.q_min_scale);
    if !used.iter().all(|v| v.is_finite()) {
        return Err(TuningError::Numerical("Q_max estimate is not finite".into()));
    }
    let tuned = FilterConfig {
        q_max_matrix: Some(used),
        ..filter.clone()
    };
    let accuracy = if verify.is_empty() {
        None
    } else {
        let summary = evaluate_coverage(&verify, &tuned, rta, cfg.align_window_s)?;
        for v in &summary.per_flight {
            per_flight.push(FlightStats {
                flight_id: v.flight_id.clone(),
                split: "verify",
                matched_samples: 0,
                rms_m: None,
                covariance_m2: None,
                used_for_q_max: false,
                error: v.observed_s.is_none().then(|| "no observed final arrival".to_string()),
            });
        }
        Some(summary)
    };
    Ok(TuningResult {
        q_max_estimate: rows(&estimate),
        q_max_used: rows(&used),
        flights_used: pruning.retained,
        per_flight,
        pruning,
        accuracy,
    })
}

fn read(path: &Path) -> Result<String, TuningError> {
    std::fs::read_to_string(path).map_err(|e| TuningError::File {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, TuningError> {
    let entries = std::fs::read_dir(dir).map_err(|e| TuningError::File {
        path: dir.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

/// Reads every `*.csv` track in `adsb_dir` and pairs it with the `*.toml` plan in `plans_dir`
/// whose `plan_id` equals the track's `flight_id`. Files are visited in name order.
pub fn load_corpus(
    adsb_dir: &Path,
    plans_dir: &Path,
) -> Result<(Vec<TuningFlight>, Vec<IngestReport>), TuningError> {
    let mut plans = std::collections::BTreeMap::new();
    for path in files_with_extension(plans_dir, "toml")? {
        let plan = parse_flight_plan(&read(&path)?).map_err(|e| TuningError::File {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        plans.insert(plan.plan_id().to_string(), plan);
    }
    let mut flights = Vec::new();
    let mut reports = Vec::new();
    for path in files_with_extension(adsb_dir, "csv")? {
        let (track, report) = parse_adsb(&read(&path)?).map_err(|e| TuningError::File {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        let plan = plans
            .get(track.flight_id())
            .cloned()
            .ok_or_else(|| TuningError::MissingPlan(track.flight_id().to_string()))?;
        flights.push(TuningFlight { plan, track });
        reports.push(report);
    }
    Ok((flights, reports))
}

/// Writes `<adsb_dir>/<id>.csv` and `<plans_dir>/<id>.toml` for every flight.
pub fn write_corpus(flights: &[TuningFlight], adsb_dir: &Path, plans_dir: &Path) -> Result<(), crate::Error> {
    std::fs::create_dir_all(adsb_dir)?;
    std::fs::create_dir_all(plans_dir)?;
    for f in flights {
        let id = f.track.flight_id();
        std::fs::write(plans_dir.join(format!("{id}.toml")), f.plan.to_canonical_string())?;
        let file = std::fs::File::create(adsb_dir.join(format!("{id}.csv")))?;
        write_adsb_csv(&f.track, std::io::BufWriter::new(file))?;
    }
    Ok(())
}
