use geographiclib_rs::{Geodesic, InverseGeodesic};
use proptest::prelude::*;
use rtaprop::geo::{
    parse_flight_plan, to_local_frame, EnuFrame, FlightPlan, GeoError, GeoWaypoint,
};

fn wp(latitude: f64, longitude: f64, altitude: f64, rta: f64) -> GeoWaypoint {
    GeoWaypoint { latitude, longitude, altitude, rta }
}

fn doc(rows: &[(f64, f64, f64, f64)]) -> String {
    let mut s = String::from("plan_id = \"T\"\naltitude_reference = \"wgs84_ellipsoid\"\n");
    for (lat, lon, alt, rta) in rows {
        s += &format!("\n[[waypoint]]\nlat_deg = {lat:?}\nlon_deg = {lon:?}\nalt_m = {alt:?}\nrta_s = {rta:?}\n");
    }
    s
}

#[test]
fn parse_errors_carry_the_waypoint_index() {
    let two = parse_flight_plan(&doc(&[(40.0, -105.0, 0.0, 0.0), (40.01, -105.0, 0.0, 60.0)])).unwrap();
    assert_eq!(two.len(), 2);

    let err = parse_flight_plan(&doc(&[
        (40.0, -105.0, 0.0, 0.0),
        (40.01, -105.0, 0.0, 60.0),
        (40.02, -105.0, 0.0, 60.0),
    ]))
    .unwrap_err();
    assert_eq!(err.to_string(), "non-monotone RTA at index 2");

    let err = parse_flight_plan(&doc(&[(40.0, -105.0, 0.0, 0.0), (91.0, -105.0, 0.0, 60.0)])).unwrap_err();
    assert!(matches!(err, GeoError::OutOfRange { index: 1, field: "latitude", .. }));
}

#[test]
fn vertical_plan_projects_to_the_up_axis() {
    let plan = FlightPlan::new("V", vec![wp(35.0, 139.0, 100.0, 0.0), wp(35.0, 139.0, 200.0, 10.0)]).unwrap();
    let local = to_local_frame(&plan);
    assert_eq!(local.points()[0].position, nalgebra::Vector3::zeros());
    let p = local.points()[1].position;
    assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9);
    assert!((p.z - 100.0).abs() < 1e-9);
}

#[test]
fn equatorial_hundredth_degree_matches_geodesic() {
    let plan = FlightPlan::new("E", vec![wp(0.0, 0.0, 0.0, 0.0), wp(0.0, 0.01, 0.0, 60.0)]).unwrap();
    let p = to_local_frame(&plan).points()[1].position;
    let s12: f64 = Geodesic::wgs84().inverse(0.0, 0.0, 0.0, 0.01);
    // Frozen value from an independent geodesic implementation.
    assert!((s12 - 1113.194_907_932_735_8).abs() < 1e-6);
    assert!((p.x - s12).abs() < 1.0, "x = {}", p.x);
    assert!(p.y.abs() < 1e-6);
}

#[test]
fn chord_lengths_track_geodesics_below_50_km() {
    let g = Geodesic::wgs84();
    let origins = [(0.0, 0.0), (40.0, -105.0), (-33.9, 151.2), (64.1, -21.9)];
    let offsets = [(0.1, 0.0), (0.0, 0.3), (0.2, -0.2), (-0.3, 0.1)];
    for &(lat, lon) in &origins {
        let frame = EnuFrame::new(wp(lat, lon, 0.0, 0.0));
        for &(dlat, dlon) in &offsets {
            let enu = frame.to_local(lat + dlat, lon + dlon, 0.0);
            let s12: f64 = g.inverse(lat, lon, lat + dlat, lon + dlon);
            assert!(s12 < 50_000.0);
            assert!((enu.norm() - s12).abs() / s12 < 1e-3, "{lat},{lon} +{dlat},{dlon}");
        }
    }
}

fn arb_plan() -> impl Strategy<Value = FlightPlan> {
    (
        -80.0..80.0f64,
        -179.0..179.0f64,
        0.0..5000.0f64,
        prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64, -500.0..500.0f64, 1.0..600.0f64), 1..8),
    )
        .prop_filter_map("coincident waypoints", |(lat, lon, alt, legs)| {
            let mut wps = vec![wp(lat, lon, alt, 1000.0)];
            for (dlat, dlon, dalt, dt) in legs {
                let last = *wps.last().unwrap();
                wps.push(wp(
                    (last.latitude + dlat).clamp(-89.0, 89.0),
                    (last.longitude + dlon).clamp(-179.9, 179.9),
                    last.altitude + dalt,
                    last.rta + dt,
                ));
            }
            FlightPlan::new("P", wps).ok()
        })
}

proptest! {
    #[test]
    fn projection_round_trips(plan in arb_plan()) {
        let local = to_local_frame(&plan);
        let frame = local.frame();
        let t0 = plan.waypoints()[0].rta;
        for (w, p) in plan.waypoints().iter().zip(local.points()) {
            let (lat, lon, alt) = frame.to_geodetic(&p.position);
            prop_assert!((lat - w.latitude).abs() < 1e-6);
            prop_assert!((lon - w.longitude).abs() < 1e-6);
            prop_assert!((alt - w.altitude).abs() < 1e-3);
            prop_assert_eq!(p.t, w.rta - t0);
        }
    }

    #[test]
    fn canonical_text_round_trips(plan in arb_plan()) {
        let text = plan.to_canonical_string();
        let again = parse_flight_plan(&text).unwrap();
        prop_assert_eq!(&again, &plan);
        prop_assert_eq!(again.to_canonical_string(), text);
    }
}
