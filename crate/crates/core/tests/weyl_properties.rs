//! Additivity and reduction of the partial mean counts and staircases.

use std::f64::consts::PI;

use billiard_core::classical::WeylCoefficients;
use billiard_core::geometry::{Domain, DomainSpec};
use billiard_core::solver::mean_count;
use billiard_core::weyl::{fit_coefficients, full_staircase, predict, staircase, top_window, FitBasis};
use proptest::prelude::*;

fn sorted_levels(raw: Vec<f64>) -> Vec<f64> {
    let mut e = raw;
    e.sort_by(f64::total_cmp);
    e
}

proptest! {
    #[test]
    fn partial_means_add_up(
        area in 0.1..5.0f64,
        length in 0.1..10.0f64,
        split_a in 0.0..1.0f64,
        split_l in 0.0..1.0f64,
        e in 0.0..1e5f64,
    ) {
        let whole = WeylCoefficients::dirichlet(area, length);
        let a = WeylCoefficients::dirichlet(split_a * area, split_l * length);
        let b = WeylCoefficients::dirichlet(area - a.area, length - a.length);
        let sum = predict(&a, e) + predict(&b, e);
        let n = predict(&whole, e);
        prop_assert!((sum - n).abs() <= 1e-12 * (1.0 + n.abs()), "{sum} vs {n}");
    }

    /// Dyadic weights make every partial sum exact in floating point.
    #[test]
    fn complementary_staircases_add_exactly(
        levels in prop::collection::vec((1.0..1e4f64, 0u32..=64), 1..300),
    ) {
        let (raw, ks): (Vec<f64>, Vec<u32>) = levels.into_iter().unzip();
        let w: Vec<Option<f64>> = ks.iter().map(|&k| Some(k as f64 / 64.0)).collect();
        let wc: Vec<Option<f64>> = ks.iter().map(|&k| Some((64 - k) as f64 / 64.0)).collect();
        let a = staircase(&raw, &w, "a").unwrap();
        let b = staircase(&raw, &wc, "b").unwrap();
        let full = full_staircase(&raw);
        for &e in a.energies.iter().chain([0.0, 2e4].iter()) {
            prop_assert_eq!(a.count(e) + b.count(e), full.count(e));
        }
        let e = sorted_levels(raw);
        prop_assert_eq!(full.count(e[e.len() - 1]), e.len() as f64);
    }
}

#[test]
fn full_region_reproduces_the_two_term_count() {
    for spec in [
        DomainSpec::mushroom(1.0, 1.0, 0.5),
        DomainSpec::quarter_ellipse(1.0, 0.7),
        DomainSpec::cosine(1.3, 0.8, 0.24),
        DomainSpec::rectangle(1.0, 2f64.sqrt()),
        DomainSpec::quarter_circle(1.0),
    ] {
        let d = Domain::new(spec).unwrap();
        let c = WeylCoefficients::dirichlet(d.area(), d.perimeter());
        for e in [0.0, 10.0, 1e3, 1e5] {
            let expect = (d.area() * e - d.perimeter() * e.sqrt()) / (4.0 * PI);
            assert!((predict(&c, e) - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            assert_eq!(predict(&c, e), mean_count(&d, e));
        }
    }
}

#[test]
fn fit_recovers_exact_mean_count() {
    let c = WeylCoefficients::dirichlet(1.3, 2.2);
    // Levels placed where the mean count crosses l + ½.
    let mut levels = Vec::new();
    let mut e = 1.0;
    for l in 0..600 {
        while predict(&c, e) < l as f64 + 0.5 {
            e += 1e-3;
        }
        levels.push(e);
    }
    let st = full_staircase(&levels);
    let f = fit_coefficients(&st, top_window(&st, 0.8), FitBasis::Full).unwrap();
    assert!((f.alpha * 4.0 * PI / 1.3 - 1.0).abs() < 1e-3, "{f:?}");
    assert!((-f.beta * 4.0 * PI / 2.2 - 1.0).abs() < 2e-2, "{f:?}");
}
