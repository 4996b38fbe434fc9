//! Partial spectral staircases, their mean-count prediction and
//! coefficient fits.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::classical::WeylCoefficients;
use crate::error::{Error, Result};

/// Weights below this count as zero when counting effective steps.
const ZERO_WEIGHT: f64 = 1e-12;

/// Cumulative weighted level count of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    pub region: String,
    /// Sorted breakpoints.
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    /// `cumulative[l]` = sum of weights up to and including level `l`.
    pub cumulative: Vec<f64>,
    pub total_states: usize,
}

impl Staircase {
    /// `N_Γ(E)`: weighted count of levels with `E_l ≤ e`.
    pub fn count(&self, e: f64) -> f64 {
        let n = self.energies.partition_point(|&x| x <= e);
        if n == 0 {
            0.0
        } else {
            self.cumulative[n - 1]
        }
    }

    /// `(E, N)` halfway between consecutive distinct breakpoints, where the
    /// staircase is flat.
    pub fn midpoints(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.energies.len());
        for l in 0..self.energies.len().saturating_sub(1) {
            let (a, b) = (self.energies[l], self.energies[l + 1]);
            if b > a {
                out.push((0.5 * (a + b), self.cumulative[l]));
            }
        }
        out
    }

    /// Breakpoints in `[e_lo, e_hi]` with nonzero weight.
    pub fn effective_steps(&self, e_lo: f64, e_hi: f64) -> usize {
        self.energies
            .iter()
            .zip(&self.weights)
            .filter(|(e, w)| **e >= e_lo && **e <= e_hi && **w > ZERO_WEIGHT)
            .count()
    }
}

/// Staircase of one region from per-state weights (`None` = not
/// classified). Energies need not be sorted.
pub fn staircase(energies: &[f64], weights: &[Option<f64>], region: &str) -> Result<Staircase> {
    if energies.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} energies but {} weights",
            energies.len(),
            weights.len()
        )));
    }
    let missing: Vec<usize> = weights.iter().enumerate().filter(|(_, w)| w.is_none()).map(|(i, _)| i).collect();
    if !missing.is_empty() {
        return Err(Error::MissingWeights(missing));
    }
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let e: Vec<f64> = order.iter().map(|&i| energies[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i].unwrap()).collect();
    let mut acc = 0.0;
    let cumulative = w
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    Ok(Staircase { region: region.to_string(), energies: e, weights: w, cumulative, total_states: energies.len() })
}

/// Unit-weight staircase of all levels.
pub fn full_staircase(energies: &[f64]) -> Staircase {
    staircase(energies, &vec![Some(1.0); energies.len()], "full").expect("unit weights are complete")
}

/// Mean count `A E/4π + bc_sign · L √E/4π`.
pub fn predict(coeffs: &WeylCoefficients, e: f64) -> f64 {
    let e = e.max(0.0);
    (coeffs.area * e + coeffs.bc_sign * coeffs.length * e.sqrt()) / (4.0 * PI)
}

/// Fluctuation `Δ_Γ(E) = N_Γ(E) − A_Γ E/4π` at one staircase midpoint, with
/// the boundary-term curves to compare it against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub energy: f64,
    pub count: f64,
    pub mean: f64,
    pub delta: f64,
    /// `bc_sign · L_Γ √E/4π`.
    pub theory: f64,
    /// The same with the perpendicular-launch length, when requested.
    pub theory_perpendicular: Option<f64>,
}

pub fn residual(stairs: &Staircase, coeffs: &WeylCoefficients, perpendicular_length: Option<f64>) -> Vec<ResidualSample> {
    stairs
        .midpoints()
        .into_iter()
        .map(|(e, n)| {
            let area_term = coeffs.area * e / (4.0 * PI);
            let boundary = |l: f64| coeffs.bc_sign * l * e.sqrt() / (4.0 * PI);
            ResidualSample {
                energy: e,
                count: n,
                mean: predict(coeffs, e),
                delta: n - area_term,
                theory: boundary(coeffs.length),
                theory_perpendicular: perpendicular_length.map(boundary),
            }
        })
        .collect()
}

/// Which terms of `N ≈ αE + β√E + γ` are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitBasis {
    /// `{E, √E, 1}`.
    Full,
    /// `{E, √E}`; the constant is fixed at zero.
    NoOffset,
    /// `{E, 1}` with `β` held at the given value.
    FixedBeta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Standard errors of the fitted parameters (zero for fixed ones).
    pub alpha_err: f64,
    pub beta_err: f64,
    pub gamma_err: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub basis: FitBasis,
    /// Ratio of extreme singular values of the column-scaled design.
    pub condition: f64,
}

/// Minimum breakpoints with nonzero weight in a fit window.
pub const MIN_FIT_STEPS: usize = 100;

/// Least-squares fit of the staircase at its midpoints inside `window`.
pub fn fit_coefficients(stairs: &Staircase, window: (f64, f64), basis: FitBasis) -> Result<WeylFit> {
    let (lo, hi) = window;
    let steps = stairs.effective_steps(lo, hi);
    if steps < MIN_FIT_STEPS {
        return Err(Error::Statistics(format!(
            "fit window [{lo}, {hi}] holds {steps} weighted steps, need {MIN_FIT_STEPS}"
        )));
    }
    let pts: Vec<(f64, f64)> = stairs.midpoints().into_iter().filter(|(e, _)| *e >= lo && *e <= hi).collect();
    let fixed_beta = match basis {
        FitBasis::FixedBeta(b) => b,
        _ => 0.0,
    };
    let columns: Vec<fn(f64) -> f64> = match basis {
        FitBasis::Full => vec![|e| e, f64::sqrt, |_| 1.0],
        FitBasis::NoOffset => vec![|e| e, f64::sqrt],
        FitBasis::FixedBeta(_) => vec![|e| e, |_| 1.0],
    };
    let (m, p) = (pts.len(), columns.len());
    let mut design = Mat::<f64>::from_fn(m, p, |i, j| columns[j](pts[i].0));
    let rhs: Vec<f64> = pts.iter().map(|(e, n)| n - fixed_beta * e.sqrt()).collect();
    let scales: Vec<f64> = (0..p).map(|j| 1.0 / design.col(j).norm_l2()).collect();
    for (j, sc) in scales.iter().enumerate() {
        for i in 0..m {
            design[(i, j)] *= sc;
        }
    }
    let svd = design.thin_svd().map_err(|e| Error::FitConditioning(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let condition = s[0] / s[p - 1];
    if !(condition < 1e10) {
        return Err(Error::FitConditioning(format!(
            "design matrix on [{lo}, {hi}] has condition {condition:.3e}; widen the window"
        )));
    }
    let (u, v) = (svd.U(), svd.V());
    let mut coef = vec![0.0; p];
    for r in 0..p {
        let proj: f64 = (0..m).map(|i| u[(i, r)] * rhs[i]).sum::<f64>() / s[r];
        for (j, c) in coef.iter_mut().enumerate() {
            *c += v[(j, r)] * proj;
        }
    }
    let resid: Vec<f64> = (0..m)
        .map(|i| rhs[i] - (0..p).map(|j| design[(i, j)] * coef[j]).sum::<f64>())
        .collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let dof = (m - p).max(1) as f64;
    let var = rss / dof;
    let errs: Vec<f64> = (0..p)
        .map(|j| (var * (0..p).map(|r| (v[(j, r)] / s[r]).powi(2)).sum::<f64>()).sqrt() * scales[j])
        .collect();
    let coef: Vec<f64> = coef.iter().zip(&scales).map(|(c, s)| c * s).collect();
    let (alpha, alpha_err) = (coef[0], errs[0]);
    let (beta, beta_err, gamma, gamma_err) = match basis {
        FitBasis::Full => (coef[1], errs[1], coef[2], errs[2]),
        FitBasis::NoOffset => (coef[1], errs[1], 0.0, 0.0),
        FitBasis::FixedBeta(b) => (b, 0.0, coef[1], errs[1]),
    };
    Ok(WeylFit {
        alpha,
        beta,
        gamma,
        alpha_err,
        beta_err,
        gamma_err,
        residual_rms: (rss / m as f64).sqrt(),
        window,
        points: m,
        basis,
        condition,
    })
}

/// Fit window covering the top `fraction` of the staircase's energy range.
pub fn top_window(stairs: &Staircase, fraction: f64) -> (f64, f64) {
    let (lo, hi) = (stairs.energies[0], *stairs.energies.last().unwrap());
    (hi - fraction * (hi - lo), hi)
}

/// RMS distance of `Δ_Γ` from the parallel and perpendicular boundary
/// terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    pub rms_parallel: f64,
    pub rms_perpendicular: f64,
    pub samples: usize,
}

impl Discrimination {
    pub fn prefers_parallel(&self) -> bool {
        self.rms_parallel < self.rms_perpendicular
    }
}

pub fn discriminate(
    stairs: &Staircase,
    coeffs: &WeylCoefficients,
    perpendicular_length: f64,
    window: (f64, f64),
) -> Result<Discrimination> {
    let samples: Vec<ResidualSample> = residual(stairs, coeffs, Some(perpendicular_length))
        .into_iter()
        .filter(|r| r.energy >= window.0 && r.energy <= window.1)
        .collect();
    if samples.is_empty() {
        return Err(Error::Statistics(format!("no staircase midpoints in [{}, {}]", window.0, window.1)));
    }
    let rms = |f: &dyn Fn(&ResidualSample) -> f64| {
        (samples.iter().map(|r| (r.delta - f(r)).powi(2)).sum::<f64>() / samples.len() as f64).sqrt()
    };
    Ok(Discrimination {
        rms_parallel: rms(&|r| r.theory),
        rms_perpendicular: rms(&|r| r.theory_perpendicular.unwrap()),
        samples: samples.len(),
    })
}

/// How closely `Δ_Γ` minus its mean offset follows the boundary term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tracking {
    /// Mean of `Δ_Γ − theory` over the window.
    pub offset: f64,
    pub rms: f64,
    /// `|theory|` at the last sample of the window.
    pub term_at_top: f64,
    pub samples: usize,
}

impl Tracking {
    pub fn relative_rms(&self) -> f64 {
        self.rms / self.term_at_top
    }
}

pub fn track_boundary_term(stairs: &Staircase, coeffs: &WeylCoefficients, window: (f64, f64)) -> Result<Tracking> {
    let samples: Vec<ResidualSample> =
        residual(stairs, coeffs, None).into_iter().filter(|r| r.energy >= window.0 && r.energy <= window.1).collect();
    let Some(last) = samples.last() else {
        return Err(Error::Statistics(format!("no staircase midpoints in [{}, {}]", window.0, window.1)));
    };
    let n = samples.len() as f64;
    let offset = samples.iter().map(|r| r.delta - r.theory).sum::<f64>() / n;
    let rms = (samples.iter().map(|r| (r.delta - r.theory - offset).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Tracking { offset, rms, term_at_top: last.theory.abs(), samples: samples.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mushroom_full_prediction() {
        let c = WeylCoefficients::dirichlet(1.285398, 5.570796);
        assert!((predict(&c, 1000.0) - 88.28).abs() < 0.01);
        assert_eq!(predict(&c, 0.0), 0.0);
        let n = WeylCoefficients { bc_sign: 1.0, ..c };
        let gap = predict(&n, 1000.0) - predict(&c, 1000.0);
        assert!((gap - 2.0 * 5.570796 * 1000f64.sqrt() / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn rectangle_full_staircase_counts_levels() {
        let mut e: Vec<f64> = (1..6).flat_map(|m| (1..6).map(move |n| PI * PI * (m * m + n * n) as f64)).collect();
        e.sort_by(f64::total_cmp);
        e.truncate(10);
        let st = full_staircase(&e);
        for (i, x) in e.iter().enumerate() {
            let below = e.iter().filter(|y| *y <= x).count() as f64;
            assert_eq!(st.count(*x), below, "level {i}");
        }
        assert_eq!(st.count(0.0), 0.0);
    }

    #[test]
    fn missing_weights_are_listed() {
        let err = staircase(&[1.0, 2.0, 3.0], &[Some(1.0), None, None], "reg").unwrap_err();
        assert!(matches!(err, Error::MissingWeights(ref v) if v == &[1, 2]));
    }

    #[test]
    fn exact_prediction_has_boundary_residual() {
        // Staircase whose midpoints lie exactly on the prediction.
        let c = WeylCoefficients::dirichlet(1.0, 1.0);
        let e: Vec<f64> = (1..400).map(|k| 50.0 * k as f64).collect();
        let mut st = full_staircase(&e);
        for (l, cum) in st.cumulative.iter_mut().enumerate() {
            if l + 1 < e.len() {
                *cum = predict(&c, 0.5 * (e[l] + e[l + 1]));
            }
        }
        for r in residual(&st, &c, None) {
            assert!((r.delta - r.theory).abs() < 1e-9);
        }
        let t = track_boundary_term(&st, &c, (0.0, 1e9)).unwrap();
        assert!(t.offset.abs() < 1e-9 && t.rms < 1e-9);
        assert!((t.term_at_top - (0.5 * (e[397] + e[398])).sqrt() / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn synthetic_fit_recovers_coefficients() {
        // Levels placed by inverting the mean count, jittered by up to half a level.
        let c = WeylCoefficients::dirichlet(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut e = Vec::new();
        let mut x: f64 = 1.0;
        for k in 1..=2000 {
            let target = k as f64 + rng.random_range(-0.5..0.5);
            while predict(&c, x) < target {
                x += 0.5;
            }
            e.push(x);
        }
        let st = full_staircase(&e);
        let fit = fit_coefficients(&st, top_window(&st, 0.8), FitBasis::Full).unwrap();
        assert!((fit.alpha * 4.0 * PI - 1.0).abs() < 0.02, "{fit:?}");
        assert!((fit.beta * 4.0 * PI + 1.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn narrow_window_is_rejected() {
        let e: Vec<f64> = (1..50).map(|k| k as f64).collect();
        let st = full_staircase(&e);
        assert!(matches!(fit_coefficients(&st, (1.0, 50.0), FitBasis::Full), Err(Error::Statistics(_))));
    }
}
