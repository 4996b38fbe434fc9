//! Wall-depletion profile of incommensurate rectangle modes.

use billiard_core::bessel::bessel_j_zero;
use billiard_core::halfplane::{depletion_profile, uniform_grid};

const L_Y: f64 = std::f64::consts::SQRT_2;

fn grid(kappa: f64) -> Vec<f64> {
    uniform_grid(3.0 / kappa, 60)
}

#[test]
fn first_crossing_sits_at_the_bessel_zero() {
    let e: f64 = 4000.0;
    let k = e.sqrt();
    let q = grid(k);
    let p = depletion_profile(1.0, L_Y, e, 400.0, &q).unwrap();
    let cell = q[1] - q[0];
    let expect = bessel_j_zero(0.0, 1) / (2.0 * k);
    let found = p.first_crossing().expect("profile reaches 1");
    assert!((found - expect).abs() <= cell, "crossing {found}, expected {expect} ± {cell}");
}

#[test]
fn doubling_the_window_barely_moves_the_rms() {
    let e: f64 = 4000.0;
    let q = grid(e.sqrt());
    let narrow = depletion_profile(1.0, L_Y, e, 400.0, &q).unwrap();
    let wide = depletion_profile(1.0, L_Y, e, 800.0, &q).unwrap();
    let q_max = 3.0 / e.sqrt();
    let change = (narrow.rms_error(q_max) - wide.rms_error(q_max)).abs();
    assert!(change < 0.01, "rms {} vs {}", narrow.rms_error(q_max), wide.rms_error(q_max));
    assert!(wide.modes > narrow.modes);
}

#[test]
fn measured_profile_is_a_density() {
    let e: f64 = 4000.0;
    let q = uniform_grid(0.3, 200);
    let p = depletion_profile(1.0, L_Y, e, 400.0, &q).unwrap();
    assert!(p.measured.iter().all(|&m| (0.0..=2.0).contains(&m)));
    let near = depletion_profile(1.0, L_Y, e, 400.0, &[1e-6]).unwrap();
    assert!(near.measured[0] < 1e-6);
}
