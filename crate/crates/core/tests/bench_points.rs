use softchain::bench::*;
use softchain::env::box_tilt;
use softchain::model::RobotModel;

#[test]
fn scenario_labels_parse_back() {
    for s in [Scenario::Contact, Scenario::Free] {
        assert_eq!(s.label().parse::<Scenario>().unwrap(), s);
    }
    assert!("grasp".parse::<Scenario>().is_err());
}

#[test]
fn contact_start_touches_the_box_and_free_start_does_not() {
    let model = RobotModel::shipped();
    let (_, _, pressed, err) = time_point(&contact_start(&model).unwrap(), 0.005, 20);
    assert!(err.is_none());
    let free = free_start(&model).unwrap();
    assert!(box_tilt(&free.state) < 1e-9);
    assert!(free.state.box_position.x > 4.0);
    // the count includes box-floor contacts, which both scenarios share
    let (_, _, resting, err) = time_point(&free, 0.005, 20);
    assert!(err.is_none());
    assert!(pressed > resting, "{pressed} vs {resting}");
}

#[test]
fn points_cover_the_grid_in_order() {
    let model = RobotModel::shipped();
    let dts = [0.001, 0.01];
    let ns = [2, 5];
    let pts = run_bench(&model, &dts, &ns, 50, Scenario::Contact);
    assert_eq!(pts.len(), 4);
    for (i, p) in pts.iter().enumerate() {
        assert_eq!(p.disk_count, ns[i / 2]);
        assert_eq!(p.dt, dts[i % 2]);
        assert!(p.error.is_none(), "{:?}", p.error);
        assert_eq!(p.steps, 50);
        assert!((p.sim_time - 50.0 * p.dt).abs() < 1e-12);
        assert!(p.wall_time > 0.0);
        assert!((p.rtf - p.sim_time / p.wall_time).abs() < 1e-9 * p.rtf);
    }
    let mut csv = Vec::new();
    write_bench_csv(&mut csv, &pts).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scenario,dt,N,steps,wall_time_s,rtf,contacts,error");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("contact,0.001,2,50,"));
}

#[test]
fn invalid_disk_count_is_recorded_not_fatal() {
    let pts = run_bench(&RobotModel::shipped(), &[0.01], &[1, 2], 5, Scenario::Free);
    assert!(pts[0].error.is_some() && pts[0].steps == 0 && pts[0].rtf == 0.0);
    assert!(pts[1].error.is_none());
}
