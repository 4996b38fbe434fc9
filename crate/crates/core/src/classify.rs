//! Region weights of eigenstates: boundary Husimi projection onto a phase
//! space region, and the quarter-circle basis projection for the mushroom.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_j_zeros_below};
use crate::classical::{classify_birkhoff, Birkhoff, RegionSpec};
use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainKind, Point};
use crate::quadrature::composite_gauss_legendre;
use crate::solver::EigState;

/// Boundary Husimi grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HusimiSettings {
    pub n_s: usize,
    pub n_p: usize,
    /// Coherent-state width in `s` is `width / √κ`; 1 is the symmetric choice.
    pub width: f64,
}

impl Default for HusimiSettings {
    fn default() -> Self {
        HusimiSettings { n_s: 400, n_p: 400, width: 1.0 }
    }
}

/// Husimi density on midpoint cells of `[0, L) × (−1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub perimeter: f64,
    pub n_s: usize,
    pub n_p: usize,
    /// Row-major in `s`; sums to 1 after multiplying by the cell area.
    pub values: Vec<f64>,
}

impl HusimiGrid {
    pub fn ds(&self) -> f64 {
        self.perimeter / self.n_s as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 / self.n_p as f64
    }

    pub fn s_at(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.ds()
    }

    pub fn p_at(&self, k: usize) -> f64 {
        -1.0 + (k as f64 + 0.5) * self.dp()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_p + k]
    }

    /// `(s, p)` of the largest cell.
    pub fn peak(&self) -> (f64, f64) {
        let (idx, _) = self.values.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        (self.s_at(idx / self.n_p), self.p_at(idx % self.n_p))
    }

    /// Plot-ready matrix: one row per `s`, with a header comment.
    pub fn write_matrix(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "# husimi n_s={} n_p={} perimeter={}", self.n_s, self.n_p, self.perimeter)?;
        for i in 0..self.n_s {
            let row: Vec<String> = (0..self.n_p).map(|k| format!("{:e}", self.get(i, k))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Signed offsets within `reach` of `s` to the midpoints of an `n`-point
/// periodic grid of period `l`, with the grid index.
fn periodic_offsets(l: f64, n: usize, s: f64, reach: f64) -> Vec<(usize, f64)> {
    let h = l / n as f64;
    let images = (reach / l).ceil() as i64;
    let mut out = Vec::new();
    for j in 0..n {
        let base = (j as f64 + 0.5) * h - s;
        let wrapped = base - l * (base / l).round();
        for m in -images..=images {
            let d = wrapped + m as f64 * l;
            if d.abs() <= reach {
                out.push((j, d));
            }
        }
    }
    out
}

/// Overlap of the normal-derivative trace with a periodized boundary
/// coherent state centered at `(s, p)`, squared.
pub fn husimi(state: &EigState, perimeter: f64, s: f64, p: f64, width: f64) -> f64 {
    let kappa = state.kappa;
    let sig = width / kappa.sqrt();
    let h = perimeter / state.trace.len() as f64;
    let norm = (kappa / (PI * width * width)).powf(0.25);
    let (mut re, mut im) = (0.0, 0.0);
    for (j, d) in periodic_offsets(perimeter, state.trace.len(), s, 8.0 * sig) {
        let g = state.trace[j] * (-0.5 * (d / sig).powi(2)).exp() * norm * h;
        let (sn, cs) = (kappa * p * d).sin_cos();
        re += g * cs;
        im += g * sn;
    }
    re * re + im * im
}

/// Normalized Husimi grid over the whole boundary section.
pub fn husimi_grid(state: &EigState, domain: &Domain, settings: &HusimiSettings) -> HusimiGrid {
    let l = domain.perimeter();
    let (n_s, n_p) = (settings.n_s, settings.n_p);
    let kappa = state.kappa;
    let sig = settings.width / kappa.sqrt();
    let h = l / state.trace.len() as f64;
    let dp = 2.0 / n_p as f64;
    let mut values: Vec<f64> = (0..n_s)
        .into_par_iter()
        .flat_map_iter(|i| {
            let s = (i as f64 + 0.5) * l / n_s as f64;
            let mut re = vec![0.0; n_p];
            let mut im = vec![0.0; n_p];
            for (j, d) in periodic_offsets(l, state.trace.len(), s, 8.0 * sig) {
                let g = state.trace[j] * (-0.5 * (d / sig).powi(2)).exp() * h;
                // e^{iκ p_k d} by rotation from p_0 = −1 + dp/2.
                let (s0, c0) = (kappa * (-1.0 + 0.5 * dp) * d).sin_cos();
                let (sr, cr) = (kappa * dp * d).sin_cos();
                let (mut a, mut b) = (c0, s0);
                for k in 0..n_p {
                    re[k] += g * a;
                    im[k] += g * b;
                    (a, b) = (a * cr - b * sr, a * sr + b * cr);
                }
            }
            (0..n_p).map(move |k| re[k] * re[k] + im[k] * im[k])
        })
        .collect();
    let total: f64 = values.iter().sum::<f64>() * (l / n_s as f64) * dp;
    if total > 0.0 {
        values.iter_mut().for_each(|v| *v /= total);
    }
    HusimiGrid { perimeter: l, n_s, n_p, values }
}

/// Region indicator on the cell centers of a Husimi grid.
#[derive(Debug, Clone)]
pub struct RegionGrid {
    pub region: RegionSpec,
    pub n_s: usize,
    pub n_p: usize,
    pub chi: Vec<f64>,
}

impl RegionGrid {
    pub fn new(domain: &Domain, region: &RegionSpec, n_s: usize, n_p: usize) -> Result<Self> {
        region.check_domain(domain)?;
        let l = domain.perimeter();
        let chi = (0..n_s * n_p)
            .into_par_iter()
            .map(|c| {
                let s = ((c / n_p) as f64 + 0.5) * l / n_s as f64;
                let p = -1.0 + ((c % n_p) as f64 + 0.5) * 2.0 / n_p as f64;
                classify_birkhoff(domain, region, Birkhoff { s, p })
            })
            .collect();
        Ok(RegionGrid { region: region.clone(), n_s, n_p, chi })
    }

    /// Cell-wise `1 − χ`.
    pub fn complement(&self) -> Option<RegionGrid> {
        Some(RegionGrid {
            region: self.region.complement()?,
            n_s: self.n_s,
            n_p: self.n_p,
            chi: self.chi.iter().map(|c| 1.0 - c).collect(),
        })
    }
}

/// `∫_Γ H / ∫ H`, half-weight cells counted at ½.
pub fn weight_husimi(grid: &HusimiGrid, region: &RegionGrid) -> Result<f64> {
    if grid.n_s != region.n_s || grid.n_p != region.n_p {
        return Err(Error::InvalidParameter(format!(
            "Husimi grid {}x{} does not match region grid {}x{}",
            grid.n_s, grid.n_p, region.n_s, region.n_p
        )));
    }
    let total: f64 = grid.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("Husimi grid is identically zero".into()));
    }
    let inside: f64 = grid.values.iter().zip(&region.chi).map(|(h, c)| h * c).sum();
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Separatrix partition of a quarter-ellipse section: the rotating region,
/// whose complement is the oscillating one.
pub fn ellipse_separatrix(domain: &Domain) -> Result<RegionSpec> {
    if domain.kind() != DomainKind::QuarterEllipse {
        return Err(Error::Unsupported(format!("separatrix needs a quarter ellipse, got {}", domain.kind())));
    }
    Ok(RegionSpec::EllipseRotating)
}

/// Anything that can be sampled inside the domain.
pub trait Wavefunction: Sync {
    fn value(&self, q: Point) -> f64;
    fn energy(&self) -> f64;
}

impl Wavefunction for EigState {
    fn value(&self, q: Point) -> f64 {
        EigState::value(self, q)
    }

    fn energy(&self) -> f64 {
        self.energy
    }
}

/// Quarter-circle basis projection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSettings {
    /// Basis energies are kept in `[E/f, E f]`.
    pub window_factor: f64,
    /// Allowed regular-mode mass in the outer fifth (in log energy) of the
    /// window, on each side. Only regular modes count: ψ does not vanish on
    /// the stem opening, so the total overlap decays slowly with energy.
    pub tail_tolerance: f64,
    /// Quadrature nodes per unit of `κ_max R` in each polar direction.
    pub nodes_per_kappa_r: f64,
    pub max_widenings: usize,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        ProjectionSettings { window_factor: 4.0, tail_tolerance: 1e-3, nodes_per_kappa_r: 1.5, max_widenings: 2 }
    }
}

/// Outcome of one quarter-circle projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub w_reg: f64,
    /// Total squared overlap with the retained basis.
    pub captured: f64,
    /// Larger of the two regular-mode edge masses.
    pub tail: f64,
    pub window_factor: f64,
    pub terms: usize,
}

/// Normalized cap mode `N J_m(j r/R) sin(mφ)`.
#[derive(Debug, Clone, Copy)]
struct CapMode {
    m: usize,
    zero: f64,
    energy: f64,
    norm: f64,
}

fn cap_modes(radius: f64, e_lo: f64, e_hi: f64) -> Vec<CapMode> {
    let j_max = radius * e_hi.sqrt();
    let mut out = Vec::new();
    let mut m = 2;
    while (m as f64) < j_max {
        for z in bessel_j_zeros_below(m as f64, j_max) {
            let energy = (z / radius).powi(2);
            if energy >= e_lo {
                // ∫ J_m(j r/R)² r dr = R² J_{m+1}(j)²/2 and ∫ sin² = π/4.
                let norm = (8.0 / PI).sqrt() / (radius * bessel_j(m as f64 + 1.0, z).abs());
                out.push(CapMode { m, zero: z, energy, norm });
            }
        }
        m += 2;
    }
    out
}

/// Regular weight `Σ |⟨ψ_qc^{mn}|ψ⟩|² Θ(m − a√E_mn)` over even-`m` modes of
/// the cap quarter disk with energies in the window.
pub fn weight_mushroom_projection(domain: &Domain, psi: &dyn Wavefunction, settings: &ProjectionSettings) -> Result<Projection> {
    if domain.kind() != DomainKind::Mushroom {
        return Err(Error::Unsupported(format!("quarter-circle projection needs a mushroom, got {}", domain.kind())));
    }
    let radius = domain.param("R");
    let stem = domain.param("a");
    let e = psi.energy();
    let f = settings.window_factor;
    let (e_lo, e_hi) = (e / f, e * f);
    let modes = cap_modes(radius, e_lo, e_hi);
    let kr = e_hi.sqrt() * radius;
    let nodes = ((settings.nodes_per_kappa_r * kr).ceil() as usize).max(32);
    let panels = nodes.div_ceil(16);
    let (rs, rw) = composite_gauss_legendre(0.0, radius, panels, 16);
    let (ps, pw) = composite_gauss_legendre(0.0, 0.5 * PI, panels, 16);
    // ψ on the polar grid, row per radius.
    let values: Vec<Vec<f64>> = rs
        .par_iter()
        .map(|&r| ps.iter().map(|&phi| psi.value([r * phi.cos(), r * phi.sin()])).collect())
        .collect();
    let m_max = modes.iter().map(|m| m.m).max().unwrap_or(0);
    // Angular moments F_m(r) = ∫ sin(mφ) ψ(r, φ) dφ for even m.
    let moments: Vec<Vec<f64>> = values
        .par_iter()
        .map(|row| {
            (0..=m_max / 2)
                .map(|h| {
                    let m = 2 * h;
                    row.iter().zip(ps.iter().zip(&pw)).map(|(v, (phi, w))| w * v * (m as f64 * phi).sin()).sum()
                })
                .collect()
        })
        .collect();
    let overlaps: Vec<f64> = modes
        .par_iter()
        .map(|md| {
            let k = md.zero / radius;
            let c: f64 = rs
                .iter()
                .zip(&rw)
                .zip(&moments)
                .map(|((r, w), mom)| w * r * bessel_j(md.m as f64, k * r) * mom[md.m / 2])
                .sum();
            md.norm * c
        })
        .collect();
    let edge = f.powf(0.2);
    let mut w_reg = 0.0;
    let mut captured = 0.0;
    let (mut tail_lo, mut tail_hi) = (0.0, 0.0);
    for (md, c) in modes.iter().zip(&overlaps) {
        let c2 = c * c;
        captured += c2;
        if md.m as f64 <= stem * md.energy.sqrt() {
            continue;
        }
        w_reg += c2;
        if md.energy < e_lo * edge {
            tail_lo += c2;
        }
        if md.energy > e_hi / edge {
            tail_hi += c2;
        }
    }
    let tail = tail_lo.max(tail_hi);
    if tail > settings.tail_tolerance {
        return Err(Error::TruncationWindow { tail });
    }
    Ok(Projection { w_reg: w_reg.clamp(0.0, 1.0), captured, tail, window_factor: f, terms: modes.len() })
}

/// [`weight_mushroom_projection`], widening the window on tail violations.
pub fn mushroom_projection_widening(domain: &Domain, psi: &dyn Wavefunction, settings: &ProjectionSettings) -> Result<Projection> {
    let mut s = *settings;
    for attempt in 0..=settings.max_widenings {
        match weight_mushroom_projection(domain, psi, &s) {
            Err(Error::TruncationWindow { tail }) if attempt < settings.max_widenings => {
                let _ = tail;
                s.window_factor *= 2.0;
            }
            other => return other,
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// How a weight was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Husimi,
    Projection,
    Separatrix,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Husimi => "husimi",
            Method::Projection => "projection",
            Method::Separatrix => "separatrix",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "husimi" => Ok(Method::Husimi),
            "projection" => Ok(Method::Projection),
            "separatrix" => Ok(Method::Separatrix),
            _ => Err(Error::InvalidParameter(format!("unknown classification method '{s}'"))),
        }
    }
}

/// Region weights of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub index: usize,
    pub weights: BTreeMap<String, f64>,
    pub method: Method,
}

impl WeightRecord {
    pub fn max_weight(&self) -> f64 {
        self.weights.values().copied().fold(0.0, f64::max)
    }
}

/// Weights of every state for a region and its complement (when it has
/// one), named `(name, complement_name)`.
pub fn classify_states(
    domain: &Domain,
    states: &[EigState],
    region: &RegionSpec,
    method: Method,
    husimi_settings: &HusimiSettings,
    projection_settings: &ProjectionSettings,
) -> Result<Vec<WeightRecord>> {
    let name = region.name().to_string();
    let comp_name = region.complement().map(|c| c.name().to_string());
    let pair = |index: usize, w: f64| {
        let mut weights = BTreeMap::new();
        weights.insert(name.clone(), w);
        if let Some(c) = &comp_name {
            weights.insert(c.clone(), 1.0 - w);
        }
        WeightRecord { index, weights, method }
    };
    match method {
        Method::Projection => {
            let regular = match region {
                RegionSpec::MushroomRegular => true,
                RegionSpec::MushroomChaotic => false,
                other => return Err(Error::Unsupported(format!("projection weights only exist for mushroom regions, not {other}"))),
            };
            states
                .iter()
                .map(|st| {
                    let w = mushroom_projection_widening(domain, st, projection_settings)?.w_reg;
                    Ok(pair(st.index, if regular { w } else { 1.0 - w }))
                })
                .collect()
        }
        Method::Husimi | Method::Separatrix => {
            if method == Method::Separatrix {
                ellipse_separatrix(domain)?;
            }
            let grid = RegionGrid::new(domain, region, husimi_settings.n_s, husimi_settings.n_p)?;
            states
                .iter()
                .map(|st| Ok(pair(st.index, weight_husimi(&husimi_grid(st, domain, husimi_settings), &grid)?)))
                .collect()
        }
    }
}

/// Fraction of states in the upper half of the energy range whose largest
/// region weight exceeds `threshold`, plus the same fraction in `bins`
/// equal-count energy bins over the whole list.
pub fn bimodality(energies: &[f64], records: &[WeightRecord], threshold: f64, bins: usize) -> (f64, Vec<f64>) {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| energies[records[a].index].total_cmp(&energies[records[b].index]));
    let frac = |sl: &[usize]| sl.iter().filter(|&&i| records[i].max_weight() > threshold).count() as f64 / sl.len().max(1) as f64;
    let (lo, hi) = (energies[records[idx[0]].index], energies[records[*idx.last().unwrap()].index]);
    let mid = 0.5 * (lo + hi);
    let upper: Vec<usize> = idx.iter().copied().filter(|&i| energies[records[i].index] >= mid).collect();
    let per_bin = idx.len().div_ceil(bins.max(1));
    (frac(&upper), idx.chunks(per_bin.max(1)).map(frac).collect())
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = 0.5 * (i + j) as f64;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
