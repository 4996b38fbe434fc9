//! Depletion of the local density of states near a straight Dirichlet
//! wall, checked on exact rectangle modes.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j;
use crate::error::{Error, Result};

/// Dirichlet mode `2/√(L_x L_y) sin(mπx/L_x) sin(nπy/L_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectMode {
    pub m: u32,
    pub n: u32,
    pub energy: f64,
}

impl RectMode {
    pub fn value(&self, lx: f64, ly: f64, x: f64, y: f64) -> f64 {
        2.0 / (lx * ly).sqrt() * (self.m as f64 * PI * x / lx).sin() * (self.n as f64 * PI * y / ly).sin()
    }
}

/// All modes with `E ≤ e_max`, sorted by energy.
pub fn rectangle_modes(lx: f64, ly: f64, e_max: f64) -> Result<Vec<RectMode>> {
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidParameter(format!("rectangle sides {lx} x {ly} must be positive")));
    }
    let mut out = Vec::new();
    let (kx, ky) = ((PI / lx).powi(2), (PI / ly).powi(2));
    let mut m = 1u32;
    while kx * (m as f64).powi(2) + ky <= e_max {
        let mut n = 1u32;
        loop {
            let e = kx * (m as f64).powi(2) + ky * (n as f64).powi(2);
            if e > e_max {
                break;
            }
            out.push(RectMode { m, n, energy: e });
            n += 1;
        }
        m += 1;
    }
    out.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.m.cmp(&b.m)));
    Ok(out)
}

/// Averaged wall-distance profile of `|ψ|²` against `1 − J₀(2κq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepletionProfile {
    pub q_perp: Vec<f64>,
    /// Window- and wall-averaged `|ψ|²`, in units of the bulk density `1/A`.
    pub measured: Vec<f64>,
    pub theory: Vec<f64>,
    pub energy: f64,
    pub half_width: f64,
    pub kappa: f64,
    pub modes: usize,
}

impl DepletionProfile {
    /// RMS of measured minus theory over `q ≤ q_max`.
    pub fn rms_error(&self, q_max: f64) -> f64 {
        let d: Vec<f64> = self
            .q_perp
            .iter()
            .zip(self.measured.iter().zip(&self.theory))
            .filter(|(q, _)| **q <= q_max)
            .map(|(_, (m, t))| m - t)
            .collect();
        (d.iter().map(|x| x * x).sum::<f64>() / d.len().max(1) as f64).sqrt()
    }

    /// First grid point where the measured profile reaches 1.
    pub fn first_crossing(&self) -> Option<f64> {
        self.measured.iter().position(|&m| m >= 1.0).map(|i| self.q_perp[i])
    }
}

/// Default lower bound on window modes; see [`depletion_profile_with`].
pub const MIN_WINDOW_MODES: usize = 50;

/// Profile at distance `q` from the wall `y = 0`, averaged over `x` and over
/// modes with `|E_mn − e| ≤ half_width`.
pub fn depletion_profile(lx: f64, ly: f64, e: f64, half_width: f64, q_grid: &[f64]) -> Result<DepletionProfile> {
    depletion_profile_with(lx, ly, e, half_width, q_grid, MIN_WINDOW_MODES)
}

pub fn depletion_profile_with(
    lx: f64,
    ly: f64,
    e: f64,
    half_width: f64,
    q_grid: &[f64],
    min_modes: usize,
) -> Result<DepletionProfile> {
    if let Some(q) = q_grid.iter().find(|q| !(**q > 0.0 && **q < 0.25 * ly)) {
        return Err(Error::InvalidParameter(format!("q_perp = {q} outside (0, L_y/4)")));
    }
    let modes: Vec<RectMode> =
        rectangle_modes(lx, ly, e + half_width)?.into_iter().filter(|m| m.energy >= e - half_width).collect();
    if modes.len() < min_modes {
        return Err(Error::Statistics(format!(
            "energy window {e} ± {half_width} holds {} modes, need {min_modes}",
            modes.len()
        )));
    }
    // The x-average of sin² is ½, so relative to 1/A each mode contributes
    // 2 sin²(nπq/L_y).
    let measured: Vec<f64> = q_grid
        .par_iter()
        .map(|&q| {
            modes.iter().map(|m| 2.0 * (m.n as f64 * PI * q / ly).sin().powi(2)).sum::<f64>() / modes.len() as f64
        })
        .collect();
    let kappa = e.sqrt();
    let theory = q_grid.iter().map(|&q| 1.0 - bessel_j(0.0, 2.0 * kappa * q)).collect();
    Ok(DepletionProfile {
        q_perp: q_grid.to_vec(),
        measured,
        theory,
        energy: e,
        half_width,
        kappa,
        modes: modes.len(),
    })
}

/// `n` evenly spaced distances in `(0, q_max]`.
pub fn uniform_grid(q_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| q_max * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_modes_below_100() {
        let m = rectangle_modes(1.0, 1.0, 100.0).unwrap();
        let pairs: Vec<(u32, u32)> = m.iter().map(|m| (m.m, m.n)).collect();
        assert_eq!(pairs, vec![(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]);
    }

    #[test]
    fn mode_is_normalized() {
        let mode = RectMode { m: 1, n: 1, energy: 2.0 * PI * PI };
        let n = 400;
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += mode.value(1.0, 1.0, (i as f64 + 0.5) * h, (j as f64 + 0.5) * h).powi(2);
            }
        }
        assert!((acc * h * h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn count_matches_mean_count() {
        let e = 4000.0;
        let n = rectangle_modes(1.0, 1.0, e).unwrap().len() as f64;
        let mean = (e - 4.0 * e.sqrt()) / (4.0 * PI);
        assert!((n - mean).abs() < 0.03 * mean, "{n} vs {mean}");
    }

    #[test]
    fn profile_vanishes_at_wall_and_saturates() {
        let k = 4000f64.sqrt();
        let grid = [1e-9, 12.0 / k];
        let p = depletion_profile(1.0, 2f64.sqrt(), 4000.0, 400.0, &grid).unwrap();
        assert!(p.measured[0] < 1e-12 && p.theory[0] < 1e-12);
        assert!((p.measured[1] - 1.0).abs() < 0.25 && (p.theory[1] - 1.0).abs() < 0.25);
    }

    #[test]
    fn thin_window_is_rejected() {
        let err = depletion_profile(1.0, 1.0, 100.0, 1.0, &[0.01]).unwrap_err();
        assert!(matches!(err, Error::Statistics(_)));
    }
}
