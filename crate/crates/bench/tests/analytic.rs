//! The analytic verification suite and its individual checks.

use isac_bench::verify::*;
use isac_core::bounds::{bound_for_d, BoundMode, BoundOptions};

#[test]
fn every_analytic_check_passes() {
    let report = verify_analytic();
    for c in &report.checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
    assert_eq!(report.checks.len(), 5);
}

#[test]
fn snr_row_without_cancellation() {
    let nic = |k| bound_for_d(k, 1, BoundMode::Nic, BoundOptions::default());
    assert_eq!(nic(0), 1);
    assert_eq!(nic(3), 3);
}

#[test]
fn equal_power_full_channel_value() {
    let c = check_full_channel_sdp();
    assert!(c.passed, "{}", c.detail);
    assert!(c.detail.contains("2.666666667"));
}

#[test]
fn golden_table_matches_the_core_fixture() {
    let fixture = include_str!("../../core/tests/golden/table1.csv");
    assert_eq!(fixture.replace("\r\n", "\n"), GOLDEN_TABLE);
}
