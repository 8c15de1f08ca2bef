//! The demo operations, run natively.

use isac_web::{bound_value, design, two_beams};

#[test]
fn bound_calculator() {
    assert_eq!(bound_value(3, 4, "ic"), Ok(5));
    assert_eq!(bound_value(3, 4, "nic"), Ok(3));
    assert_eq!(bound_value(1, 15, "nic"), Ok(4));
    assert_eq!(bound_value(0, 16, "radar"), Ok(4));
    assert!(bound_value(1, 0, "ic").is_err());
    assert!(bound_value(1, 4, "both").is_err());
}

#[test]
fn two_beam_split() {
    let v = two_beams(8, 1, 0.0, 1.0).unwrap();
    assert!((v.beta1 - 0.910554).abs() < 1e-6);
    assert!(v.single_beam_objective.is_none());
    assert_eq!(v.relative_gap, 1.0);
    let best = v
        .curve_objective
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    assert!(best >= v.two_beam_objective - 1e-12);
    assert!(two_beams(4, 4, 0.0, 1.0).is_err());
}

#[test]
fn reduced_design_meets_the_bound() {
    let v = design(6, &[-20.0], &[30.0, -50.0], true, 2.0).unwrap();
    assert_eq!(v.d, 4);
    assert!(v.reduced_beams <= v.bound);
    assert_eq!(v.bound, 4);
    assert!(v.power <= 10.0 + 1e-6);
    assert_eq!(v.angles.len(), v.sensing_pattern.len());
    // The users receive most of their beams' power.
    let at = |deg: f64| {
        v.angles
            .iter()
            .position(|&a| (a - deg).abs() < 1e-9)
            .unwrap()
    };
    assert!(v.comm_pattern[at(30.0)] > v.comm_pattern[at(0.0)]);

    let nic = design(6, &[10.0], &[-40.0], false, 2.0).unwrap();
    assert!(nic.reduced_beams <= nic.bound);
    assert!(design(6, &[], &[], true, 2.0).is_err());
}
