//! Scan completeness, eigenfunction residuals, orthogonality and
//! determinism of the particular-solutions solver.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use billiard_core::geometry::{Domain, DomainSpec};
use billiard_core::quadrature::{brent_minimize, composite_gauss_legendre};
use billiard_core::solver::{find_eigenvalues, Collocation, EigState, SolverSettings, Spectrum};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COSINE_E_MAX: f64 = 400.0;

fn cosine() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| Domain::new(DomainSpec::cosine(1.3, 0.8, 0.24)).unwrap())
}

fn cosine_spectrum() -> &'static Spectrum {
    static S: OnceLock<Spectrum> = OnceLock::new();
    S.get_or_init(|| find_eigenvalues(cosine(), 0.0, COSINE_E_MAX, &SolverSettings::default()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Every σ dip on a grid ten times finer than the production scan is a
    /// level the solver already reported.
    #[test]
    fn finer_scan_finds_no_missed_level(start in 3.0..(COSINE_E_MAX.sqrt() - 1.0)) {
        let d = cosine();
        let settings = SolverSettings::default();
        let spec = cosine_spectrum();
        let (lo, hi) = (start, start + 0.6);
        let colloc = Collocation::new(d, hi, &settings, 7);
        let sigma = |k: f64| colloc.sigmas(k).unwrap()[0];
        let density = d.area() * hi / (2.0 * std::f64::consts::PI);
        let step = 1.0 / density / settings.steps_per_spacing / 10.0;
        let n = ((hi - lo) / step).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        let vals: Vec<f64> = grid.iter().map(|&k| sigma(k)).collect();
        for i in 1..n {
            if !(vals[i] < vals[i - 1] && vals[i] <= vals[i + 1]) {
                continue;
            }
            let (k, s2, _) = brent_minimize(|k| sigma(k).powi(2), grid[i - 1], grid[i + 1], 1e-10);
            if s2.sqrt() < settings.accept_threshold {
                let near = spec.states.iter().any(|s| (s.kappa - k).abs() < 1e-6);
                prop_assert!(near, "dip at kappa {k} (sigma {}) not in the spectrum", s2.sqrt());
            }
        }
    }
}

/// `(Δ + E)ψ` by the fourth-order five-point stencil in each direction.
fn helmholtz_residual(s: &EigState, q: [f64; 2], h: f64) -> f64 {
    let f = |dx: f64, dy: f64| s.value([q[0] + dx, q[1] + dy]);
    let c = f(0.0, 0.0);
    let second = |a: f64, b: f64, m1: f64, m2: f64| (-b + 16.0 * a - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h);
    let dxx = second(f(h, 0.0), f(2.0 * h, 0.0), f(-h, 0.0), f(-2.0 * h, 0.0));
    let dyy = second(f(0.0, h), f(0.0, 2.0 * h), f(0.0, -h), f(0.0, -2.0 * h));
    dxx + dyy + s.energy * c
}

#[test]
fn eigenfunctions_satisfy_helmholtz() {
    let d = cosine();
    let spec = cosine_spectrum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let [x0, y0, x1, y1] = d.bounding_box();
    for s in spec.states.iter().step_by(4) {
        let h = 0.02 / s.kappa;
        let mut pts = Vec::new();
        while pts.len() < 2000 {
            let q = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
            if d.is_inside(q) && d.distance_to_boundary(q) > 3.0 * h {
                pts.push(q);
            }
        }
        let sup = pts.iter().map(|&q| s.value(q).abs()).fold(0.0, f64::max);
        let worst = pts[..200].iter().map(|&q| helmholtz_residual(s, q, h).abs()).fold(0.0, f64::max);
        let rel = worst / (s.energy * sup);
        assert!(rel < 1e-6, "state {} (E = {}): residual {rel:e}", s.index, s.energy);
    }
}

/// Gram matrix of the states over a star-shaped quarter domain, by
/// Gauss-Legendre in polar coordinates about the corner at the origin.
fn gram(states: &[EigState], radius: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let (ts, tw) = composite_gauss_legendre(0.0, FRAC_PI_2, 12, 16);
    let (us, uw) = composite_gauss_legendre(0.0, 1.0, 10, 16);
    let n = states.len();
    let mut g = vec![vec![0.0; n]; n];
    let mut vals = vec![0.0; n];
    for (&t, &wt) in ts.iter().zip(&tw) {
        let rt = radius(t);
        for (&u, &wu) in us.iter().zip(&uw) {
            let r = u * rt;
            let q = [r * t.cos(), r * t.sin()];
            for (v, s) in vals.iter_mut().zip(states) {
                *v = s.value(q);
            }
            let w = wt * wu * rt * r;
            for i in 0..n {
                for j in 0..=i {
                    g[i][j] += w * vals[i] * vals[j];
                }
            }
        }
    }
    g
}

fn check_orthonormal(name: &str, states: &[EigState], radius: impl Fn(f64) -> f64) {
    let g = gram(states, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let i = rng.random_range(1..states.len());
        let j = rng.random_range(0..i);
        assert!(g[i][j].abs() < 1e-3, "{name}: <{i}|{j}> = {}", g[i][j]);
    }
    for (i, row) in g.iter().enumerate() {
        assert!((row[i] - 1.0).abs() < 1e-3, "{name}: <{i}|{i}> = {}", row[i]);
    }
}

#[test]
fn quarter_circle_states_are_orthonormal() {
    let d = Domain::new(DomainSpec::quarter_circle(1.0)).unwrap();
    let spec = find_eigenvalues(&d, 0.0, 1000.0, &SolverSettings::default()).unwrap();
    check_orthonormal("quarter circle", &spec.states[..40], |_| 1.0);
}

#[test]
fn quarter_ellipse_states_are_orthonormal() {
    let (ra, rb) = (1.0, 0.7);
    let d = Domain::new(DomainSpec::quarter_ellipse(ra, rb)).unwrap();
    let spec = find_eigenvalues(&d, 0.0, 1400.0, &SolverSettings::default()).unwrap();
    check_orthonormal("quarter ellipse", &spec.states[..40], |t: f64| 1.0 / ((t.cos() / ra).powi(2) + (t.sin() / rb).powi(2)).sqrt());
}

#[test]
fn solving_is_deterministic() {
    let d = cosine();
    let a = find_eigenvalues(d, 0.0, 150.0, &SolverSettings::default()).unwrap();
    let b = find_eigenvalues(d, 0.0, 150.0, &SolverSettings::default()).unwrap();
    assert_eq!(a.states.len(), b.states.len());
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.energy.to_bits(), y.energy.to_bits());
        assert!(x.coefficients.iter().zip(&y.coefficients).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(x.trace.iter().zip(&y.trace).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    a.save(&pa).unwrap();
    b.save(&pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    let back = Spectrum::load(&pa).unwrap();
    assert_eq!(back.states, a.states);
}
