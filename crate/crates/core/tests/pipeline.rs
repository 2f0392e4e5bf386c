use jdx_core::harness::{run_suite, ParitySelection, VerificationReport, VerifyConfig};
use jdx_core::hermite2ch::Application;
use jdx_core::seeds::Parity;

fn config(lambda1: f64, lambda2: f64) -> VerifyConfig {
    VerifyConfig {
        lambda1,
        lambda2,
        parity: ParitySelection::Both,
        ..VerifyConfig::default()
    }
}

#[test]
fn suite_passes_across_energy_pairs() {
    for (l1, l2) in [(-0.5, -1.0), (-2.0, -0.25), (-0.7, -0.7), (-0.1, -3.0)] {
        let report = run_suite(&config(l1, l2));
        assert_eq!(report.sections.len(), 2);
        assert!(report.all_passed(), "({l1}, {l2}): {:?}", report.failed_names());
    }
}

#[test]
fn calibrated_checks_skip_elsewhere() {
    let report = run_suite(&config(-2.0, -0.25));
    let bound = report.find(Parity::Even, "asym_a_plus_bound").unwrap();
    assert!(bound.skipped.is_some());
    let decay = report.find(Parity::Even, "asym_a_plus_decay").unwrap();
    assert!(decay.skipped.is_none() && decay.pass);
}

#[test]
fn report_round_trips_through_json() {
    let report = run_suite(&VerifyConfig::default());
    let text = serde_json::to_string(&report).unwrap();
    let back: VerificationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.failed_names(), report.failed_names());
    assert_eq!(back.sections[0].checks.len(), report.sections[0].checks.len());
}

#[test]
fn tolerance_override_fails_only_that_check() {
    let mut cfg = VerifyConfig::default();
    cfg.tolerances.insert("cross_path".into(), 0.0);
    let report = run_suite(&cfg);
    assert_eq!(report.failed_names(), ["cross_path"]);
}

#[test]
fn potential_matches_oracle_rows() {
    let app = Application::build(-0.5, -1.0, Parity::Even, 10).unwrap();
    let rows = app.potential_table().unwrap();
    let r = rows[1];
    assert_eq!(r.n, 2);
    for (got, want) in [r.a_plus, r.a_minus, r.b_plus, r.b_minus].into_iter().zip([
        0.488_691_045_844,
        0.025_010_121_070,
        0.277_927_376_581,
        0.029_090_167_279,
    ]) {
        assert!((got - want).abs() < 1e-11, "{got} vs {want}");
    }
}
