//! Bound calculators against the published table and their invariants.

use isac_core::bounds::*;
use proptest::prelude::*;

#[test]
fn sum_and_hypotenuse_examples() {
    assert_eq!(bound_sum(3, 4), 5);
    assert_eq!(bound_sum(0, 1), 1);
    assert_eq!(bound_sum(0, 15), 3);
    assert_eq!(bound_hypotenuse(1, 4), 2);
    assert_eq!(bound_hypotenuse(2, 4), 2);
    assert_eq!(bound_hypotenuse(5, 4), 5);
    assert_eq!(bound_hypotenuse(7, 15), 8);
    for d in 1..50 {
        assert_eq!(bound_hypotenuse(0, d), bound_sum(0, d));
    }
}

#[test]
fn bcrb_examples() {
    assert_eq!(bound_bcrb(0, 3, BoundMode::Ic), 2);
    assert_eq!(bound_bcrb(4, 2, BoundMode::Nic), 4);
    assert_eq!(bound_bcrb(0, 1, BoundMode::Ic), 1);
    assert_eq!(bound_bcrb(0, 1, BoundMode::Nic), 1);
}

#[test]
fn threshold_examples() {
    assert_eq!(no_extra_beams_threshold(15), 8);
    assert_eq!(no_extra_beams_threshold(1), 1);
    assert_eq!(no_extra_beams_threshold(2), 1);
}

#[test]
fn radar_examples() {
    assert_eq!(bound_radar(MetricKind::MultiTargetLos { n_targets: 1 }), 2);
    assert_eq!(bound_radar(MetricKind::FullChannel { n_tx: 6 }), 6);
    assert_eq!(bound_radar(MetricKind::AoaOnlyZeroMean { n_targets: 9 }), 3);
    let n = 1000;
    let ratio = bound_radar(MetricKind::MultiTargetLos { n_targets: n }) as f64 / n as f64;
    assert!((ratio - 3.5f64.sqrt()).abs() < 0.01, "ratio {ratio}");
}

#[test]
fn single_target_rows() {
    let nic: Vec<usize> = (0..=5).map(|k| bound_hypotenuse(k, 4)).collect();
    assert_eq!(nic, vec![2, 2, 2, 3, 4, 5]);
    for k in 0..=5 {
        assert_eq!(bound_sum(k, 4), k + 2);
        assert_eq!(bound_sum(k, 1), k + 1);
        let snr = BoundQuery {
            k_users: k,
            sizing: Sizing::Metric(MetricKind::SnrScnr),
        };
        assert_eq!(
            snr.evaluate(BoundMode::Nic, BoundOptions::default()),
            if k == 0 { 1 } else { k }
        );
    }
}

#[test]
fn generated_table_matches_golden_file() {
    let golden = include_str!("golden/table1.csv");
    assert_eq!(multitarget_bound_table(&[0, 1, 2], &[1, 2]), golden);
}

#[test]
fn nic_cap_by_antennas() {
    let q = BoundQuery {
        k_users: 1,
        sizing: Sizing::Metric(MetricKind::FullChannel { n_tx: 4 }),
    };
    assert_eq!(q.evaluate(BoundMode::Nic, BoundOptions::default()), 4);
    assert_eq!(q.evaluate(BoundMode::Ic, BoundOptions::default()), 5);
}

#[test]
fn exhaustive_structure() {
    for k in 0..=64 {
        for d in 1..=256 {
            let (s, h) = (bound_sum(k, d), bound_hypotenuse(k, d));
            assert!(h <= s, "K={k} d={d}");
            assert!(h >= k && s > k);
            if k >= no_extra_beams_threshold(d) {
                assert_eq!(h, k, "K={k} d={d}");
            }
        }
    }
}

proptest! {
    #[test]
    fn isqrt_is_the_floor(n in 0u64..(1u64 << 52)) {
        let r = isqrt(n);
        prop_assert!(r * r <= n && (r + 1) * (r + 1) > n);
    }

    #[test]
    fn bounds_grow_with_users(k in 0usize..200, d in 1usize..2000) {
        prop_assert!(bound_sum(k + 1, d) == bound_sum(k, d) + 1);
        prop_assert!(bound_hypotenuse(k + 1, d) >= bound_hypotenuse(k, d));
    }
}
