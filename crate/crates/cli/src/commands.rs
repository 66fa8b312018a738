use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;

use rtaprop::baseline::{
    gated_kf, monte_carlo_oracle, relative_frobenius, ulpa_bounds, ulpa_half_width,
    write_arrivals_csv, write_mc_csv, McResult,
};
use rtaprop::config::RunConfig;
use rtaprop::filter::{
    position_std, position_std_series, propagate_plan, step_changes, write_trace_csv,
    SegmentTrace, UpdatePolicy,
};
use rtaprop::geo::{parse_flight_plan, to_local_frame, LocalPlan};
use rtaprop::rta::{estimate_rtas, write_bounds_csv, RtaEstimate};
use rtaprop::spline::{fit_trajectory, TrajectorySpline};
use rtaprop::tuning::{self, IngestReport, TuningError, TuningResult};

use crate::manifest::RunManifest;
use crate::{Common, Failure};

type Outcome<T = ()> = Result<T, Failure>;

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn output(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Output(e.into())
}

/// Library errors during computation: numerical breakdowns are class 3, anything else means
/// the inputs were unusable.
fn compute(e: impl Into<rtaprop::Error>) -> Failure {
    let e: rtaprop::Error = e.into();
    if e.is_numerical() {
        Failure::Numerical(e.into())
    } else if e.is_io() {
        Failure::Output(e.into())
    } else {
        Failure::Input(e.into())
    }
}

fn read_bytes(path: &Path) -> Outcome<Vec<u8>> {
    std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)
}

fn load_config(common: &Common, manifest_inputs: &mut Vec<(String, Vec<u8>)>) -> Outcome<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let bytes = read_bytes(path)?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
            let cfg = RunConfig::parse(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(input)?;
            manifest_inputs.push((format!("config:{}", path.display()), bytes));
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_plan(path: &Path, manifest_inputs: &mut Vec<(String, Vec<u8>)>) -> Outcome<(String, LocalPlan<f64>)> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
    let plan = parse_flight_plan(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(input)?;
    manifest_inputs.push((format!("plan:{}", path.display()), bytes));
    Ok((plan.plan_id().to_string(), to_local_frame(&plan)))
}

fn prepare_out(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(output)
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(output)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(output)?;
    text.push('\n');
    let path = dir.join(name);
    std::fs::write(&path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(output)
}

fn finish(command: &'static str, cfg: &RunConfig, inputs: Vec<(String, Vec<u8>)>, out: &Path) -> Outcome {
    let mut manifest = RunManifest::new(command, cfg);
    for (name, bytes) in inputs {
        manifest.record(name, &bytes);
    }
    manifest.write(out).map_err(output)
}

fn fit(plan: &LocalPlan<f64>) -> Outcome<TrajectorySpline<f64>> {
    fit_trajectory(plan).map_err(compute)
}

pub fn propagate(plan_path: &Path, dump_spline: Option<f64>, common: &Common) -> Outcome {
    let mut inputs = Vec::new();
    let cfg = load_config(common, &mut inputs)?;
    let (plan_id, plan) = load_plan(plan_path, &mut inputs)?;
    if let Some(stride) = dump_spline {
        if !(stride > 0.0) {
            return Err(input(anyhow!("--dump-spline stride must be positive, got {stride}")));
        }
    }
    let spline = fit(&plan)?;
    let traces = propagate_plan(&spline, &plan, &cfg.filter()).map_err(compute)?;
    let bounds = estimate_rtas(&plan, &traces, &cfg.rta()).map_err(compute)?;

    prepare_out(&common.out)?;
    write_trace_csv(&traces, create(&common.out, "trace.csv")?).map_err(compute)?;
    write_bounds_csv(&bounds, create(&common.out, "bounds.csv")?).map_err(compute)?;
    if let Some(stride) = dump_spline {
        spline
            .write_csv(stride, create(&common.out, "spline.csv")?)
            .map_err(compute)?;
    }
    finish("propagate", &cfg, inputs, &common.out)?;
    let last = bounds.last().expect("plans have two or more waypoints");
    println!(
        "{plan_id}: {} waypoints, final RTA {:.3} s in [{:.3}, {:.3}] at {:.0}%",
        bounds.len(),
        last.nominal_rta,
        last.lower,
        last.upper,
        100.0 * last.confidence
    );
    Ok(())
}

#[derive(Serialize)]
struct FilterSummary {
    peak_position_std_m: f64,
    terminal_position_std_m: f64,
    max_step_decrease_m: f64,
    max_step_change_m: f64,
    terminal_bound_width_s: f64,
}

fn filter_summary(traces: &[SegmentTrace<f64>], bounds: &[RtaEstimate<f64>]) -> FilterSummary {
    let series = position_std_series(traces);
    let (drop, change) = step_changes(&series);
    let last = bounds.last().expect("plans have two or more waypoints");
    FilterSummary {
        peak_position_std_m: series.iter().copied().fold(0.0, f64::max),
        terminal_position_std_m: *series.last().unwrap_or(&0.0),
        max_step_decrease_m: drop,
        max_step_change_m: change,
        terminal_bound_width_s: last.upper - last.lower,
    }
}

#[derive(Serialize)]
struct UlpaSummary {
    peak_half_width_s: f64,
    terminal_bound_width_s: f64,
}

#[derive(Serialize)]
struct MonteCarloSummary {
    samples: usize,
    seed: u64,
    peak_position_std_m: f64,
    terminal_position_std_m: f64,
    max_step_decrease_m: f64,
    max_step_change_m: f64,
    /// Relative Frobenius distance to the blended filter covariance at each waypoint k ≥ 1.
    covariance_error_per_waypoint: Vec<f64>,
    /// Central empirical interval of final-waypoint arrival times at the configured confidence.
    terminal_arrival_interval_width_s: Option<f64>,
    missed_arrivals_per_waypoint: Vec<usize>,
}

#[derive(Serialize)]
struct CompareSummary {
    plan_id: String,
    confidence: f64,
    blended: FilterSummary,
    gated: FilterSummary,
    ulpa: UlpaSummary,
    monte_carlo: MonteCarloSummary,
}

fn empirical_interval(samples: &[f64], confidence: f64) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
    Some(q(0.5 + confidence / 2.0) - q(0.5 - confidence / 2.0))
}

fn mc_summary(mc: &McResult<f64>, blended: &[SegmentTrace<f64>], confidence: f64, seed: u64) -> MonteCarloSummary {
    let series: Vec<f64> = std::iter::once(0.0)
        .chain(mc.steps.iter().map(|s| position_std(&s.covariance)))
        .collect();
    let (drop, change) = step_changes(&series);
    MonteCarloSummary {
        samples: mc.samples,
        seed,
        peak_position_std_m: series.iter().copied().fold(0.0, f64::max),
        terminal_position_std_m: *series.last().unwrap_or(&0.0),
        max_step_decrease_m: drop,
        max_step_change_m: change,
        covariance_error_per_waypoint: (1..=blended.len())
            .map(|k| relative_frobenius(mc.waypoint_covariance(k), &blended[k - 1].exit().covariance))
            .collect(),
        terminal_arrival_interval_width_s: mc.arrivals.last().and_then(|a| empirical_interval(a, confidence)),
        missed_arrivals_per_waypoint: mc.missed.clone(),
    }
}

fn write_envelope(plan: &LocalPlan<f64>, cfg: &RunConfig, out: &Path) -> Outcome {
    let ulpa = cfg.ulpa();
    let mut w = csv::Writer::from_writer(create(out, "ulpa_envelope.csv")?);
    w.write_record(["t", "half_width"]).map_err(output)?;
    let n = (plan.duration() / cfg.dt_s).ceil() as usize;
    for i in 0..=n {
        let t = (i as f64 * cfg.dt_s).min(plan.duration());
        w.write_record([t.to_string(), ulpa_half_width(plan, &ulpa, t).to_string()])
            .map_err(output)?;
    }
    w.flush().map_err(output)?;

    let mut w = csv::Writer::from_writer(create(out, "ulpa_bounds.csv")?);
    w.write_record(["waypoint", "nominal_rta", "lower", "upper"]).map_err(output)?;
    for b in ulpa_bounds(plan, &ulpa) {
        w.write_record([
            b.waypoint_index.to_string(),
            b.nominal_rta.to_string(),
            b.lower.to_string(),
            b.upper.to_string(),
        ])
        .map_err(output)?;
    }
    w.flush().map_err(output)
}

pub fn compare(plan_path: &Path, common: &Common) -> Outcome {
    let mut inputs = Vec::new();
    let cfg = load_config(common, &mut inputs)?;
    let (plan_id, plan) = load_plan(plan_path, &mut inputs)?;
    let spline = fit(&plan)?;
    let filter = cfg.filter();
    let rta = cfg.rta();

    let clock = Instant::now();
    let blended = propagate_plan(&spline, &plan, &filter).map_err(compute)?;
    let t_blended = clock.elapsed();

    let clock = Instant::now();
    let gated = gated_kf(&spline, &plan, &filter, cfg.gate_fraction).map_err(compute)?;
    let t_gated = clock.elapsed();

    let clock = Instant::now();
    let ulpa = ulpa_bounds(&plan, &cfg.ulpa());
    let t_ulpa = clock.elapsed();

    let clock = Instant::now();
    let mc = monte_carlo_oracle(&spline, &plan, &filter, UpdatePolicy::Blended, &cfg.monte_carlo())
        .map_err(compute)?;
    let t_mc = clock.elapsed();

    let blended_bounds = estimate_rtas(&plan, &blended, &rta).map_err(compute)?;
    let gated_bounds = estimate_rtas(&plan, &gated, &rta).map_err(compute)?;
    let last_ulpa = ulpa.last().expect("plans have two or more waypoints");
    let summary = CompareSummary {
        plan_id: plan_id.clone(),
        confidence: cfg.confidence,
        blended: filter_summary(&blended, &blended_bounds),
        gated: filter_summary(&gated, &gated_bounds),
        ulpa: UlpaSummary {
            peak_half_width_s: rtaprop::baseline::ulpa_vertices(&plan, &cfg.ulpa())
                .iter()
                .map(|v| v.1)
                .fold(0.0, f64::max),
            terminal_bound_width_s: last_ulpa.upper - last_ulpa.lower,
        },
        monte_carlo: mc_summary(&mc, &blended, cfg.confidence, cfg.seed),
    };

    prepare_out(&common.out)?;
    write_trace_csv(&blended, create(&common.out, "trace_blended.csv")?).map_err(compute)?;
    write_trace_csv(&gated, create(&common.out, "trace_gated.csv")?).map_err(compute)?;
    write_bounds_csv(&blended_bounds, create(&common.out, "bounds_blended.csv")?).map_err(compute)?;
    write_bounds_csv(&gated_bounds, create(&common.out, "bounds_gated.csv")?).map_err(compute)?;
    write_envelope(&plan, &cfg, &common.out)?;
    write_mc_csv(&mc, create(&common.out, "trace_monte_carlo.csv")?).map_err(compute)?;
    for (i, arrivals) in mc.arrivals.iter().enumerate() {
        let name = format!("arrivals_wp{:03}.csv", i + 1);
        write_arrivals_csv(arrivals, create(&common.out, &name)?).map_err(compute)?;
    }
    write_json(&common.out, "summary.json", &summary)?;
    finish("compare", &cfg, inputs, &common.out)?;

    // Timings vary run to run, so they are reported here and never written to disk.
    println!("{plan_id}: method         max step drop (m)  terminal width (s)  wall clock");
    let row = |name: &str, drop: Option<f64>, width: Option<f64>, d: std::time::Duration| {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("  {name:<14} {:>17}  {:>18}  {:>9.3} ms", f(drop), f(width), d.as_secs_f64() * 1e3);
    };
    row("blended", Some(summary.blended.max_step_decrease_m), Some(summary.blended.terminal_bound_width_s), t_blended);
    row("gated", Some(summary.gated.max_step_decrease_m), Some(summary.gated.terminal_bound_width_s), t_gated);
    row("ulpa", None, Some(summary.ulpa.terminal_bound_width_s), t_ulpa);
    row(
        "monte_carlo",
        Some(summary.monte_carlo.max_step_decrease_m),
        summary.monte_carlo.terminal_arrival_interval_width_s,
        t_mc,
    );
    Ok(())
}

#[derive(Serialize)]
struct TuneReport<'a> {
    ingest: &'a [IngestReport],
    #[serde(flatten)]
    result: &'a TuningResult,
}

fn digest_dir(dir: &Path, ext: &str, tag: &str, inputs: &mut Vec<(String, Vec<u8>)>) -> Outcome {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))
        .map_err(input)?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == ext))
        .collect();
    paths.sort();
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        inputs.push((format!("{tag}:{name}"), read_bytes(&p)?));
    }
    Ok(())
}

pub fn tune(adsb_dir: &Path, plans_dir: &Path, common: &Common) -> Outcome {
    let mut inputs = Vec::new();
    let cfg = load_config(common, &mut inputs)?;
    digest_dir(adsb_dir, "csv", "adsb", &mut inputs)?;
    digest_dir(plans_dir, "toml", "plan", &mut inputs)?;
    let (flights, ingest) = tuning::load_corpus(adsb_dir, plans_dir).map_err(compute)?;
    let result = match tuning::tune(&flights, &cfg.filter(), &cfg.rta(), &cfg.tune()) {
        Ok(r) => r,
        Err(TuningError::NoFlightsRetained) => {
            return Err(input(anyhow!(
                "no flights retained ({} flights loaded from {})",
                flights.len(),
                adsb_dir.display()
            )))
        }
        Err(e) => return Err(compute(e)),
    };

    prepare_out(&common.out)?;
    write_json(&common.out, "tuning_report.json", &TuneReport { ingest: &ingest, result: &result })?;
    finish("tune", &cfg, inputs, &common.out)?;

    let q = result.q_max_estimate;
    println!(
        "{} flights loaded, {} used for Q_max; diag(Q_max) = [{:.3}, {:.3}, {:.3}] m²",
        flights.len(),
        result.flights_used,
        q[0][0],
        q[1][1],
        q[2][2]
    );
    if let Some(a) = &result.accuracy {
        println!(
            "verification: {} flights, final-waypoint coverage {:.3} at {:.0}%",
            a.flights,
            a.final_waypoint_coverage,
            100.0 * a.confidence
        );
    }
    Ok(())
}
