#![allow(dead_code)]

use rtaprop::geo::LocalPlan;
use rtaprop::spline::{fit_trajectory, TrajectorySpline};

pub fn straight() -> LocalPlan<f64> {
    LocalPlan::from_xyzt(&[(0.0, 0.0, 0.0, 0.0), (1800.0, 0.0, 0.0, 60.0)]).unwrap()
}

pub fn l_shaped() -> LocalPlan<f64> {
    LocalPlan::from_xyzt(&[(0.0, 0.0, 0.0, 0.0), (3000.0, 0.0, 0.0, 100.0), (3000.0, 3000.0, 0.0, 200.0)]).unwrap()
}

pub fn six_waypoint() -> LocalPlan<f64> {
    LocalPlan::from_xyzt(&[
        (0.0, 0.0, 0.0, 0.0),
        (3000.0, 0.0, 100.0, 100.0),
        (5100.0, 2000.0, 200.0, 190.0),
        (5100.0, 5000.0, 200.0, 290.0),
        (3000.0, 7000.0, 100.0, 400.0),
        (0.0, 8000.0, 0.0, 500.0),
    ])
    .unwrap()
}

pub fn fixtures() -> Vec<(&'static str, LocalPlan<f64>)> {
    vec![("straight", straight()), ("l_shaped", l_shaped()), ("six_waypoint", six_waypoint())]
}

pub fn fit(plan: &LocalPlan<f64>) -> TrajectorySpline<f64> {
    fit_trajectory(plan).unwrap()
}
