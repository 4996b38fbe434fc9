//! Checks the Bessel routines against tables generated at 40 digits.

use billiard_core::bessel::{bessel_j_with_derivative, bessel_j_zero};

fn table(name: &str) -> Vec<Vec<f64>> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{path}: {e}"))
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect()
}

#[test]
fn j_and_derivative_match_reference() {
    let rows = table("bessel_j.txt");
    assert!(rows.len() > 200);
    let mut worst = 0.0f64;
    for r in &rows {
        let (nu, x, j_ref, jp_ref) = (r[0], r[1], r[2], r[3]);
        let (j, jp) = bessel_j_with_derivative(nu, x);
        // Relative to the local envelope so values near zeros are fair.
        let env = j_ref.hypot(jp_ref);
        // Subnormal results carry no relative accuracy.
        if env < 1e-290 {
            continue;
        }
        let ej = (j - j_ref).abs() / env;
        let ejp = (jp - jp_ref).abs() / env;
        worst = worst.max(ej).max(ejp);
        assert!(ej < 1e-12 && ejp < 1e-12, "nu={nu} x={x}: J {j:e} vs {j_ref:e}, dJ {jp:e} vs {jp_ref:e}");
    }
    eprintln!("worst envelope-relative error {worst:e}");
}

#[test]
fn zeros_match_reference() {
    for r in table("bessel_zeros.txt") {
        let (m, n, z_ref) = (r[0], r[1] as usize, r[2]);
        let z = bessel_j_zero(m, n);
        assert!((z - z_ref).abs() < 1e-12 * z_ref, "j_({m},{n}) = {z} vs {z_ref}");
    }
}
