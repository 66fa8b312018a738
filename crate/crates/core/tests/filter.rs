mod common;

use nalgebra::{Matrix2, Matrix6, Vector2, Vector3};
use rtaprop::baseline::{monte_carlo_oracle, relative_frobenius, McConfig};
use rtaprop::filter::{
    measurement_noise, predict, propagate_plan, propagate_segment, FilterConfig, FilterState,
    UpdatePolicy,
};
use rtaprop::geo::LocalPlan;

use common::{fit, fixtures};

#[test]
fn hundred_predicts_match_wiener_accumulation() {
    let cfg = FilterConfig::default();
    let mut state = FilterState::at_rest(Vector3::zeros(), 0.0);
    for _ in 0..100 {
        state = predict(&state, &Vector3::new(1.0, 2.0, 3.0), &cfg).unwrap();
    }
    // Independent per-axis recurrence: P ← F P Fᵀ + g gᵀ with g = (½, 1).
    let f = Matrix2::new(1.0, 1.0, 0.0, 1.0);
    let g = Vector2::new(0.5, 1.0);
    let mut p = Matrix2::<f64>::zeros();
    for _ in 0..100 {
        p = f * p * f.transpose() + g * g.transpose();
    }
    let n = 100.0f64;
    assert_eq!(p[(0, 0)], n.powi(3) / 3.0 - n / 12.0);
    for axis in 0..3 {
        assert_eq!(state.covariance[(axis, axis)], 333_325.0);
        assert_eq!(state.covariance[(axis + 3, axis + 3)], 100.0);
        assert_eq!(state.covariance[(axis, axis + 3)], 5_000.0);
        assert_eq!(state.covariance[(axis, axis)], p[(0, 0)]);
    }
    assert_eq!(state.t, 100.0);
}

#[test]
fn predict_never_shrinks_the_trace() {
    let cfg = FilterConfig { sigma_a2: 0.3, ..FilterConfig::default() };
    let mut state = FilterState::at_rest(Vector3::zeros(), 0.0);
    for _ in 0..20 {
        let next = predict(&state, &Vector3::new(5.0, 0.0, 0.0), &cfg).unwrap();
        assert!(next.covariance.trace() >= state.covariance.trace());
        state = next;
    }
}

#[test]
fn blended_noise_is_monotone_in_progress() {
    let cfg = FilterConfig::default();
    let mut prev = measurement_noise(0.0, &cfg);
    for i in 1..=100 {
        let q = measurement_noise(i as f64 / 100.0, &cfg);
        for d in 0..3 {
            assert!(q[(d, d)] <= prev[(d, d)]);
            assert!(q[(d, d)] >= cfg.q_min_scale && q[(d, d)] <= cfg.q_max_scale);
        }
        prev = q;
    }
}

#[test]
fn every_step_keeps_a_valid_covariance() {
    for (name, plan) in fixtures() {
        let traces = propagate_plan(&fit(&plan), &plan, &FilterConfig::default()).unwrap();
        for t in &traces {
            for s in &t.steps {
                assert!(s.state().covariance_is_valid(), "{name} segment {} step {}", t.segment, s.step);
                assert!((0.0..=1.0).contains(&s.progress));
            }
            for w in t.steps.windows(2) {
                assert!(w[1].t > w[0].t);
            }
        }
    }
}

#[test]
fn segments_chain_bitwise() {
    let plan = common::six_waypoint();
    let traces = propagate_plan(&fit(&plan), &plan, &FilterConfig::default()).unwrap();
    for w in traces.windows(2) {
        assert_eq!(w[0].exit(), w[1].entry);
    }
}

#[test]
fn single_segment_plan_equals_segment_propagation() {
    let plan = common::straight();
    let spline = fit(&plan);
    let cfg = FilterConfig::default();
    let whole = propagate_plan(&spline, &plan, &cfg).unwrap();
    let entry = FilterState::at_rest(Vector3::zeros(), 0.0);
    assert_eq!(whole, vec![propagate_segment(&spline, 0, &entry, &cfg).unwrap()]);
}

#[test]
fn noiseless_tight_filter_collapses_covariance() {
    let plan = common::straight();
    let cfg = FilterConfig { sigma_a2: 0.0, q_max_scale: 1.0, q_min_scale: 1.0, ..FilterConfig::default() };
    let entry = FilterState {
        covariance: Matrix6::identity() * 100.0,
        ..FilterState::at_rest(Vector3::zeros(), 0.0)
    };
    let trace = propagate_segment(&fit(&plan), 0, &entry, &cfg).unwrap();
    let series: Vec<f64> = trace.steps.iter().map(|s| s.covariance.trace()).collect();
    assert!(series.windows(2).all(|w| w[1] <= w[0]));
    assert!(series[series.len() - 1] < 1e-3 * entry.covariance.trace(), "{series:?}");
}

#[test]
fn more_process_noise_means_more_waypoint_variance() {
    for (name, plan) in fixtures() {
        let spline = fit(&plan);
        let base = FilterConfig { sigma_a2: 0.5, ..FilterConfig::default() };
        let doubled = FilterConfig { sigma_a2: 1.0, ..base.clone() };
        let a = propagate_plan(&spline, &plan, &base).unwrap();
        let b = propagate_plan(&spline, &plan, &doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let (px, py) = (x.exit().position_covariance(), y.exit().position_covariance());
            for d in 0..3 {
                assert!(py[(d, d)] > px[(d, d)], "{name} segment {}", x.segment);
            }
        }
    }
}

#[test]
fn monte_carlo_matches_filter_covariance() {
    for (name, plan) in fixtures() {
        let spline = fit(&plan);
        let mc = McConfig { samples: 10_000, seed: 11, ..McConfig::default() };
        let r = monte_carlo_oracle(&spline, &plan, &FilterConfig::default(), UpdatePolicy::Blended, &mc).unwrap();
        for k in 1..plan.len() {
            let err = relative_frobenius(r.waypoint_covariance(k), &r.filter[k - 1].exit().covariance);
            assert!(err <= 0.05, "{name} waypoint {k}: {err}");
        }
    }
}

fn terminal_position_variance(speed: f64, control_error_rel: f64) -> f64 {
    let plan = LocalPlan::from_xyzt(&[(0.0, 0.0, 0.0, 0.0), (60.0 * speed, 0.0, 0.0, 60.0)]).unwrap();
    let mc = McConfig { samples: 4_000, seed: 5, control_error_rel, ..McConfig::default() };
    let r = monte_carlo_oracle(&fit(&plan), &plan, &FilterConfig::default(), UpdatePolicy::Blended, &mc).unwrap();
    r.waypoint_covariance(1)[(0, 0)]
}

#[test]
fn uncertainty_scales_with_control_input() {
    let slow = terminal_position_variance(10.0, 0.05);
    let fast = terminal_position_variance(40.0, 0.05);
    assert!(fast > slow, "slow {slow} fast {fast}");
    // Without a control error the speed does not matter.
    let a = terminal_position_variance(10.0, 0.0);
    let b = terminal_position_variance(40.0, 0.0);
    assert!((a - b).abs() / a < 1e-6, "{a} {b}");
}

#[test]
fn single_precision_tracks_double() {
    let plan = common::l_shaped();
    let cfg = FilterConfig { q_max_scale: 1e4, ..FilterConfig::default() };
    let t64 = propagate_plan(&fit(&plan), &plan, &cfg).unwrap();
    let p32 = plan.cast::<f32>();
    let s32 = rtaprop::spline::fit_trajectory(&p32).unwrap();
    let t32 = propagate_plan(&s32, &p32, &cfg.cast::<f32>()).unwrap();
    for (a, b) in t64.iter().zip(&t32) {
        let va = a.waypoint_velocity_variance();
        let vb = b.waypoint_velocity_variance().map(f64::from);
        assert!((va - vb).norm() / va.norm() < 1e-3, "{va} {vb}");
    }
}
