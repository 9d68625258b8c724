use qmem_core::*;

fn coarse(n_radial_max: usize, n_freq: usize) -> SweepOptions {
    SweepOptions {
        resolution: Resolution { n_radial_max, n_freq, m_max: 2, ..Default::default() },
        converge: None,
        drive: DrivePolicy::Fixed,
        ..Default::default()
    }
}

#[test]
fn doubling_fresnel_never_lowers_forward_capacity() {
    // No mode reaches η > 0.5 at this depth, so the leading efficiency is
    // checked alongside the (possibly zero) capacity.
    let opts = coarse(12, 24);
    let reports: Vec<CapacityReport> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&f| {
            let p = ModelParams::new(10.0, f).unwrap();
            let out = capacity_reports(&p, &opts.resolution, &[Direction::Forward], 0.5, &opts.settings, None).unwrap();
            out.reports[0].clone()
        })
        .collect();
    for w in reports.windows(2) {
        assert!(w[1].total_capacity >= w[0].total_capacity);
        assert!(w[1].leading() >= w[0].leading() - 1e-9, "{} then {}", w[0].leading(), w[1].leading());
    }
}

#[test]
fn forward_mode_count_grows_with_depth() {
    let depths = [20.0, 40.0, 80.0, 160.0];
    let (points, fit) = sweep_depth(1.0, &depths, Direction::Forward, 0.5, &coarse(12, 48), None).unwrap();
    let counts: Vec<usize> = points.iter().map(|p| p.report(Direction::Forward).unwrap().total_modes).collect();
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    assert!(fit.exponent > 0.0);
    for p in &points {
        assert!(p.report_backward.is_some());
        assert_eq!(p.params.drive, c64::new(1.0, 0.0));
    }
}

#[test]
fn rerunning_a_point_from_its_record_is_bit_identical() {
    let depths = [20.0, 40.0, 80.0, 160.0];
    let (points, _) = sweep_depth(0.5, &depths, Direction::Backward, 0.5, &coarse(6, 48), None).unwrap();
    let p = &points[2];
    let again = capacity_reports(&p.params, &p.resolution, &Direction::BOTH, 0.5, &EngineSettings::default(), None).unwrap();
    assert_eq!(again.report(Direction::Forward), p.report_forward.as_ref());
    assert_eq!(again.report(Direction::Backward), p.report_backward.as_ref());
}
