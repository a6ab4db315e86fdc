use ganjoint::stream_seed;
use ganjoint::theorylab::{
    amortization_gap_demo, check_visitation_bound, jsd, replay, run_suite, strict_gap_example, visitation_instance,
    write_report, CheckKind,
};

#[test]
fn suite_holds_and_replays() {
    let rows = run_suite(1000, 10).unwrap();
    assert_eq!(rows.len(), 70);
    for r in &rows {
        assert!(r.holds, "{r:?}");
        assert_eq!(replay(r.check, r.instance_seed).unwrap(), *r);
    }
}

#[test]
fn visitation_instances_are_in_the_applicable_regime() {
    for i in 0..30u64 {
        let (mdp, pi_b, pi_phi) = visitation_instance(stream_seed(i, CheckKind::OccupSingle as u64));
        let r = check_visitation_bound(&mdp, &pi_b, &pi_phi).unwrap();
        assert!(r.applicable && r.epsilon * r.kappa_max < 1.0);
        assert!(r.holds);
    }
}

#[test]
fn constructed_example_has_strict_amortization_gap() {
    let (d, pi_b, pi_phi, class) = strict_gap_example();
    let (am, ps) = amortization_gap_demo(&d, &pi_b, &pi_phi, &class).unwrap();
    assert!(ps - am > 1e-3, "{am} {ps}");
    let per_state = 0.5 * jsd(&[0.9, 0.1], &[0.1, 0.9]) * 2.0;
    assert!((ps - per_state).abs() < 1e-12);
}

#[test]
fn report_is_parseable_csv() {
    let rows = run_suite(5, 2).unwrap();
    let mut buf = Vec::new();
    write_report(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for (line, row) in text.lines().skip(1).zip(&rows) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 7);
        assert_eq!(f[0], row.check.name());
        assert_eq!(f[1].parse::<u64>().unwrap(), row.instance_seed);
        assert_eq!(f[4].parse::<f64>().unwrap(), row.gap);
        assert_eq!(f[6].parse::<bool>().unwrap(), row.holds);
    }
}
