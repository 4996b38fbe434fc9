//! Dirichlet eigenpairs by the method of particular solutions in its
//! subspace-angle form.
//!
//! Trial functions are corner-adapted Fourier–Bessel functions
//! `J_{ν_k}(κr) sin(ν_k θ)`, `ν_k = kπ/θ_c`, which solve the Helmholtz
//! equation and vanish on both edges of the expansion corner. The quantity
//! `σ(κ)` is the smallest singular value of the boundary rows of an
//! orthonormal basis for the span of the basis evaluated at boundary and
//! interior collocation points; it dips to zero at eigenvalues.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bessel::{bessel_j_ladder, split_order};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::quadrature::{brent_minimize, gauss_legendre};

/// Tunable solver parameters; recorded with every spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Boundary collocation density at the top of each window.
    pub points_per_wavelength: f64,
    /// Minimum ratio of boundary points to basis functions.
    pub boundary_oversampling: f64,
    /// Basis size is the number of orders up to
    /// `κ r_max + growth (κ r_max)^{1/3}` plus `extra_functions`.
    pub basis_growth: f64,
    pub extra_functions: usize,
    /// Floor on the basis size; weak singularities at the other corners
    /// slow convergence at low wavenumber.
    pub min_functions: usize,
    /// Interior points per basis function.
    pub interior_factor: f64,
    /// Scan points per mean level spacing.
    pub steps_per_spacing: f64,
    pub accept_threshold: f64,
    pub warn_threshold: f64,
    /// `σ_2 < ratio · σ_1` marks a degenerate level.
    pub degeneracy_ratio: f64,
    /// Target accuracy of refined wavenumbers.
    pub refine_tol: f64,
    /// Window width as a fraction of its lower wavenumber, plus one.
    pub window_fraction: f64,
    /// Samples of the normal-derivative trace per wavelength (at least 1024 total).
    pub trace_points_per_wavelength: f64,
    /// Fraction of states whose norm is cross-checked by interior sampling.
    pub norm_check_fraction: f64,
    pub norm_check_points: usize,
    pub max_rescans: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            points_per_wavelength: 10.0,
            boundary_oversampling: 2.2,
            basis_growth: 4.0,
            extra_functions: 20,
            min_functions: 40,
            interior_factor: 2.0,
            steps_per_spacing: 4.0,
            accept_threshold: 1e-6,
            warn_threshold: 1e-4,
            degeneracy_ratio: 10.0,
            refine_tol: 1e-8,
            window_fraction: 0.1,
            trace_points_per_wavelength: 16.0,
            norm_check_fraction: 0.1,
            norm_check_points: 40_000,
            max_rescans: 2,
            seed: 20_240_601,
        }
    }
}

impl SolverSettings {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("settings serialize");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Corner-adapted Fourier–Bessel basis at fixed wavenumber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub origin: Point,
    /// Direction of `θ = 0` (the edge leaving the corner).
    pub edge_angle: f64,
    pub corner_angle: f64,
    pub kappa: f64,
    pub size: usize,
}

/// Orders grouped into integer ladders `μ + n`.
struct OrderPlan {
    mus: Vec<f64>,
    top: Vec<usize>,
    index: Vec<(usize, usize)>,
}

impl BasisSet {
    pub fn for_domain(domain: &Domain, kappa: f64, size: usize) -> Self {
        let c = expansion_corner(domain);
        let corner = domain.corners()[c];
        let edge = &domain.segments()[corner.segments.1];
        let t = edge.frame(0.0).1;
        BasisSet { origin: corner.position, edge_angle: t[1].atan2(t[0]), corner_angle: corner.angle, kappa, size }
    }

    pub fn order(&self, k: usize) -> f64 {
        k as f64 * PI / self.corner_angle
    }

    fn plan(&self) -> OrderPlan {
        let mut mus: Vec<f64> = Vec::new();
        let mut top: Vec<usize> = Vec::new();
        let mut index = Vec::with_capacity(self.size);
        for k in 1..=self.size {
            let (mu, n) = split_order(self.order(k));
            let g = match mus.iter().position(|m| (m - mu).abs() < 1e-9) {
                Some(g) => g,
                None => {
                    mus.push(mu);
                    top.push(0);
                    mus.len() - 1
                }
            };
            top[g] = top[g].max(n + 1);
            index.push((g, n));
        }
        OrderPlan { mus, top, index }
    }

    /// Corner-local polar coordinates `(r, θ)`, `θ ∈ [0, 2π)`.
    pub fn polar(&self, q: Point) -> (f64, f64) {
        let (dx, dy) = (q[0] - self.origin[0], q[1] - self.origin[1]);
        let r = dx.hypot(dy);
        let mut th = (dy.atan2(dx) - self.edge_angle).rem_euclid(2.0 * PI);
        // Points on the closing edge may round to just above 2π - θ_c.
        if th > self.corner_angle && th > 2.0 * PI - 1e-12 {
            th = 0.0;
        }
        (r, th)
    }

    fn eval_into(&self, plan: &OrderPlan, q: Point, vals: &mut [f64], grad: Option<(&mut [f64], &mut [f64])>) {
        let (r, th) = self.polar(q);
        if r < 1e-300 {
            vals.iter_mut().for_each(|v| *v = 0.0);
            if let Some((gx, gy)) = grad {
                gx.iter_mut().for_each(|v| *v = 0.0);
                gy.iter_mut().for_each(|v| *v = 0.0);
            }
            return;
        }
        let x = self.kappa * r;
        let mut ladders: Vec<Vec<f64>> = Vec::with_capacity(plan.mus.len());
        for (mu, top) in plan.mus.iter().zip(&plan.top) {
            let mut buf = Vec::with_capacity(top + 1);
            bessel_j_ladder(*mu, x, *top, &mut buf);
            ladders.push(buf);
        }
        let alpha = PI / self.corner_angle;
        let (s1, c1) = (alpha * th).sin_cos();
        let (mut sk, mut ck) = (s1, c1);
        match grad {
            None => {
                for (k, &(g, n)) in plan.index.iter().enumerate() {
                    vals[k] = ladders[g][n] * sk;
                    (sk, ck) = (sk * c1 + ck * s1, ck * c1 - sk * s1);
                }
            }
            Some((gx, gy)) => {
                let phi = th + self.edge_angle;
                let (sp, cp) = phi.sin_cos();
                for (k, &(g, n)) in plan.index.iter().enumerate() {
                    let nu = alpha * (k + 1) as f64;
                    let j = ladders[g][n];
                    let jp = nu / x * j - ladders[g][n + 1];
                    vals[k] = j * sk;
                    let dr = self.kappa * jp * sk;
                    let dt = nu / r * j * ck;
                    gx[k] = dr * cp - dt * sp;
                    gy[k] = dr * sp + dt * cp;
                    (sk, ck) = (sk * c1 + ck * s1, ck * c1 - sk * s1);
                }
            }
        }
    }

    /// `φ_k(q)` for all `k`.
    pub fn values(&self, q: Point) -> Vec<f64> {
        let mut v = vec![0.0; self.size];
        self.eval_into(&self.plan(), q, &mut v, None);
        v
    }

    /// `(φ_k, ∂_x φ_k, ∂_y φ_k)` for all `k`.
    pub fn values_and_gradients(&self, q: Point) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.size];
        let mut gx = vec![0.0; self.size];
        let mut gy = vec![0.0; self.size];
        self.eval_into(&self.plan(), q, &mut v, Some((&mut gx, &mut gy)));
        (v, gx, gy)
    }
}

/// Index of the corner used as expansion center: the largest interior angle.
pub fn expansion_corner(domain: &Domain) -> usize {
    let mut best = 0;
    for (i, c) in domain.corners().iter().enumerate() {
        if c.angle > domain.corners()[best].angle + 1e-12 {
            best = i;
        }
    }
    best
}

/// Collocation data shared by all wavenumbers in a window.
pub struct Collocation {
    pub template: BasisSet,
    pub boundary: Vec<Point>,
    pub boundary_weights: Vec<f64>,
    pub interior: Vec<Point>,
    pub interior_weight: f64,
}

const PANEL_ORDER: usize = 8;

impl Collocation {
    /// Basis and points sized for wavenumbers up to `kappa_top`.
    pub fn new(domain: &Domain, kappa_top: f64, settings: &SolverSettings, stream: u64) -> Self {
        let template = BasisSet::for_domain(domain, kappa_top, 1);
        let r_max = domain.max_radius_from(template.origin);
        let kr = kappa_top * r_max;
        let nu_max = kr + settings.basis_growth * kr.cbrt();
        let size = ((nu_max * template.corner_angle / PI).ceil() as usize + settings.extra_functions).max(settings.min_functions);
        let template = BasisSet { size, ..template };

        let corner = domain.corners()[expansion_corner(domain)];
        let skip = [corner.segments.0, corner.segments.1];
        let segs: Vec<_> = domain.segments().iter().filter(|s| !skip.contains(&s.id)).collect();
        let len: f64 = segs.iter().map(|s| s.length).sum();
        let wavelength = 2.0 * PI / kappa_top;
        let m_b = (settings.points_per_wavelength * len / wavelength).max(settings.boundary_oversampling * size as f64);
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let mut boundary = Vec::new();
        let mut boundary_weights = Vec::new();
        for seg in segs {
            let panels = ((m_b * seg.length / len) / PANEL_ORDER as f64).ceil().max(1.0) as usize;
            let h = seg.length / panels as f64;
            for p in 0..panels {
                for (x, w) in gx.iter().zip(&gw) {
                    let u = (p as f64 + 0.5 * (x + 1.0)) * h;
                    boundary.push(seg.frame(u).0);
                    boundary_weights.push(0.5 * h * w);
                }
            }
        }

        let n_int = (settings.interior_factor * size as f64).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(stream);
        let [x0, y0, x1, y1] = domain.bounding_box();
        let mut interior = Vec::with_capacity(n_int);
        while interior.len() < n_int {
            let q = [x0 + (x1 - x0) * rng.random::<f64>(), y0 + (y1 - y0) * rng.random::<f64>()];
            if domain.is_inside(q) {
                interior.push(q);
            }
        }
        Collocation {
            template,
            boundary,
            boundary_weights,
            interior,
            interior_weight: domain.area() / n_int as f64,
        }
    }

    pub fn basis(&self, kappa: f64) -> BasisSet {
        BasisSet { kappa, ..self.template.clone() }
    }

    /// Column-scaled collocation matrix and the scales.
    fn matrix(&self, kappa: f64) -> (Mat<f64>, Vec<f64>) {
        let basis = self.basis(kappa);
        let plan = basis.plan();
        let k = basis.size;
        let m_b = self.boundary.len();
        let rows = m_b + self.interior.len();
        let mut a = Mat::<f64>::zeros(rows, k);
        let mut row = vec![0.0; k];
        let wi = self.interior_weight.sqrt();
        for i in 0..rows {
            let (q, w) = if i < m_b {
                (self.boundary[i], self.boundary_weights[i].sqrt())
            } else {
                (self.interior[i - m_b], wi)
            };
            basis.eval_into(&plan, q, &mut row, None);
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = w * v;
            }
        }
        let mut scales = vec![0.0; k];
        for (j, sc) in scales.iter_mut().enumerate() {
            let norm = a.col(j).norm_l2();
            *sc = if norm > 1e-300 { 1.0 / norm } else { 0.0 };
            for i in 0..rows {
                a[(i, j)] *= *sc;
            }
        }
        (a, scales)
    }

    /// Orthonormal basis of the column span, truncated at relative 1e-14.
    fn orthonormal(&self, kappa: f64) -> Result<(Mat<f64>, Mat<f64>, Vec<f64>, Vec<f64>)> {
        let (a, scales) = self.matrix(kappa);
        let svd = a
            .thin_svd()
            .map_err(|e| Error::IllConditioned { kappa, hint: format!("SVD failed: {e:?}") })?;
        let s = svd.S().column_vector();
        let s0 = s[0];
        let rank = (0..a.ncols()).take_while(|&i| s[i] > 1e-14 * s0).count();
        if rank == 0 {
            return Err(Error::IllConditioned { kappa, hint: "collocation matrix vanishes".into() });
        }
        let u = svd.U().subcols(0, rank).to_owned();
        let v = svd.V().subcols(0, rank).to_owned();
        let sv: Vec<f64> = (0..rank).map(|i| s[i]).collect();
        Ok((u, v, sv, scales))
    }

    /// Orthonormal basis of the column span by pivoted QR, truncated where
    /// the diagonal of R drops below 1e-14 of its first entry.
    fn orthonormal_qr(&self, kappa: f64) -> Result<Mat<f64>> {
        let (a, _) = self.matrix(kappa);
        let qr = a.col_piv_qr();
        let r = qr.R();
        let r0 = r[(0, 0)].abs();
        let n = a.ncols().min(a.nrows());
        let rank = (0..n).take_while(|&i| r[(i, i)].abs() > 1e-14 * r0).count();
        if rank == 0 || !(r0 > 0.0) {
            return Err(Error::IllConditioned { kappa, hint: "collocation matrix vanishes".into() });
        }
        Ok(qr.compute_thin_Q().subcols(0, rank).to_owned())
    }

    /// Singular values of the boundary block, ascending.
    pub fn sigmas(&self, kappa: f64) -> Result<Vec<f64>> {
        let u = self.orthonormal_qr(kappa)?;
        let qb = u.subrows(0, self.boundary.len());
        let mut sv = qb
            .singular_values()
            .map_err(|e| Error::IllConditioned { kappa, hint: format!("SVD failed: {e:?}") })?;
        self.check_interior(kappa, &sv)?;
        sv.reverse();
        Ok(sv)
    }

    /// High orders live near the far boundary, so a few directions with no
    /// interior weight are normal; losing most of them is not.
    fn check_interior(&self, kappa: f64, sigmas: &[f64]) -> Result<()> {
        let lost = sigmas.iter().filter(|&&s| s > 1.0 - 1e-12).count();
        if 2 * lost > sigmas.len() {
            return Err(Error::IllConditioned {
                kappa,
                hint: format!(
                    "interior block lost rank ({lost} of {} directions); increase interior_factor or reduce extra_functions",
                    sigmas.len()
                ),
            });
        }
        Ok(())
    }

    /// Ascending boundary singular values plus basis coefficients of the
    /// `count` lowest singular vectors.
    pub fn solve(&self, kappa: f64, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (u, v, s, scales) = self.orthonormal(kappa)?;
        let qb = u.subrows(0, self.boundary.len()).to_owned();
        let svd = qb
            .thin_svd()
            .map_err(|e| Error::IllConditioned { kappa, hint: format!("SVD failed: {e:?}") })?;
        let sb = svd.S().column_vector();
        let n = sb.nrows();
        let sigmas: Vec<f64> = (0..n).rev().map(|i| sb[i]).collect();
        self.check_interior(kappa, &sigmas)?;
        let w = svd.V();
        let mut coeffs = Vec::with_capacity(count);
        for c in 0..count.min(n) {
            let col = n - 1 - c;
            let rank = s.len();
            let mut out = vec![0.0; scales.len()];
            for (k, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for r in 0..rank {
                    acc += v[(k, r)] * w[(r, col)] / s[r];
                }
                *o = acc * scales[k];
            }
            coeffs.push(out);
        }
        Ok((sigmas, coeffs))
    }
}

/// Smallest boundary singular value at `kappa` with default collocation.
pub fn sigma(domain: &Domain, kappa: f64, settings: &SolverSettings) -> Result<f64> {
    if kappa <= 0.0 {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be positive")));
    }
    Ok(Collocation::new(domain, kappa, settings, 0).sigmas(kappa)?[0])
}

/// One solved eigenpair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigState {
    pub index: usize,
    pub energy: f64,
    pub kappa: f64,
    pub sigma_min: f64,
    /// Size of the degenerate group this state belongs to.
    pub multiplicity: usize,
    /// Position within the degenerate group.
    pub multiplicity_rank: usize,
    pub basis: BasisSet,
    pub coefficients: Vec<f64>,
    /// `∫|ψ|²` of the raw coefficients, by the Rellich identity.
    pub raw_norm: f64,
    /// Interior-sampling estimate of `∫|ψ|²` after normalization, if checked.
    pub norm_check: Option<f64>,
    /// Outward normal derivative at `s_j = (j + ½) L / n`.
    pub trace: Vec<f64>,
    pub flags: Vec<String>,
}

impl EigState {
    pub fn value(&self, q: Point) -> f64 {
        self.basis.values(q).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    pub fn value_and_gradient(&self, q: Point) -> (f64, [f64; 2]) {
        let (v, gx, gy) = self.basis.values_and_gradients(q);
        let dot = |a: &[f64]| a.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>();
        (dot(&v), [dot(&gx), dot(&gy)])
    }

    pub fn trace_s(&self, perimeter: f64, j: usize) -> f64 {
        (j as f64 + 0.5) * perimeter / self.trace.len() as f64
    }
}

pub fn eigenfunction(state: &EigState, q: Point) -> f64 {
    state.value(q)
}

/// Outward normal derivative `∂ψ/∂n` at arc length `s`.
pub fn normal_derivative(domain: &Domain, state: &EigState, s: f64) -> f64 {
    let b = domain.boundary_point(s);
    let (_, g) = state.value_and_gradient(b.position);
    -(g[0] * b.normal[0] + g[1] * b.normal[1])
}

/// `∫|ψ|²` by `(1/2E) ∮ (q·n)(∂ψ/∂n)² ds` with the expansion corner as
/// origin, so the corner edges drop out.
pub fn rellich_norm(domain: &Domain, state: &EigState, points_per_wavelength: f64) -> f64 {
    let corner = domain.corners()[expansion_corner(domain)];
    let skip = [corner.segments.0, corner.segments.1];
    let o = state.basis.origin;
    let wavelength = 2.0 * PI / state.kappa;
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut total = 0.0;
    for seg in domain.segments().iter().filter(|s| !skip.contains(&s.id)) {
        let panels = ((points_per_wavelength * seg.length / wavelength) / PANEL_ORDER as f64).ceil().max(2.0) as usize;
        let h = seg.length / panels as f64;
        for p in 0..panels {
            for (x, w) in gx.iter().zip(&gw) {
                let u = (p as f64 + 0.5 * (x + 1.0)) * h;
                let (q, t, _) = seg.frame(u);
                let n_out = [t[1], -t[0]];
                let (_, g) = state.value_and_gradient(q);
                let dn = g[0] * n_out[0] + g[1] * n_out[1];
                let qn = (q[0] - o[0]) * n_out[0] + (q[1] - o[1]) * n_out[1];
                total += 0.5 * h * w * qn * dn * dn;
            }
        }
    }
    total / (2.0 * state.energy)
}

/// Stratified interior estimate of `∫|ψ|²`.
pub fn sampled_norm(domain: &Domain, state: &EigState, n_points: usize, seed: u64) -> f64 {
    let [x0, y0, x1, y1] = domain.bounding_box();
    let aspect = (x1 - x0) / (y1 - y0);
    let nx = ((n_points as f64 * aspect).sqrt().ceil() as usize).max(1);
    let ny = (n_points / nx).max(1);
    let (hx, hy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let q = [x0 + (i as f64 + rng.random::<f64>()) * hx, y0 + (j as f64 + rng.random::<f64>()) * hy];
            if domain.is_inside(q) {
                let v = state.value(q);
                acc += v * v;
            }
        }
    }
    acc * hx * hy
}

/// Rescales `state` to unit norm using the Rellich identity.
pub fn normalize(domain: &Domain, mut state: EigState, settings: &SolverSettings) -> EigState {
    let norm = rellich_norm(domain, &state, 2.0 * settings.trace_points_per_wavelength);
    state.raw_norm = norm;
    if norm > 0.0 && norm.is_finite() {
        let f = 1.0 / norm.sqrt();
        state.coefficients.iter_mut().for_each(|c| *c *= f);
        state.trace.iter_mut().for_each(|u| *u *= f);
    } else {
        state.flags.push("normalization-suspect: non-positive Rellich integral".into());
    }
    state
}

fn fill_trace(domain: &Domain, state: &mut EigState, settings: &SolverSettings) {
    let wavelength = 2.0 * PI / state.kappa;
    let n = ((settings.trace_points_per_wavelength * domain.perimeter() / wavelength).ceil() as usize).max(1024);
    state.trace = (0..n)
        .map(|j| normal_derivative(domain, state, (j as f64 + 0.5) * domain.perimeter() / n as f64))
        .collect();
}

/// One audited wavenumber window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub step: f64,
    pub levels: usize,
    /// Largest `|N(E) - N̄(E)|` over the window, and the allowed band.
    pub max_deviation: f64,
    pub band: f64,
    /// Refined dips of a verification scan that match no level.
    pub unmatched: Vec<f64>,
    pub flagged: bool,
    /// Whether the count was within the band after adding verified levels.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub windows: Vec<WindowReport>,
    pub rescans: usize,
}

impl AuditReport {
    pub fn flagged(&self) -> Vec<&WindowReport> {
        self.windows.iter().filter(|w| w.flagged).collect()
    }
}

/// Ordered eigenstates plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub fingerprint: String,
    pub settings: SolverSettings,
    pub e_min: f64,
    pub e_max: f64,
    pub states: Vec<EigState>,
    pub audit: Option<AuditReport>,
    pub warnings: Vec<String>,
}

impl Spectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    pub fn settings_hash(&self) -> String {
        self.settings.hash()
    }
}

/// Mean Dirichlet level count `A E/4π − L √E/4π`.
pub fn mean_count(domain: &Domain, e: f64) -> f64 {
    (domain.area() * e - domain.perimeter() * e.max(0.0).sqrt()) / (4.0 * PI)
}

/// Mean wavenumber spacing at `kappa`.
fn mean_kappa_spacing(domain: &Domain, kappa: f64) -> f64 {
    let density = (domain.area() * kappa / (2.0 * PI) - domain.perimeter() / (4.0 * PI)).max(domain.area() * kappa / (4.0 * PI));
    1.0 / density
}

/// A scan window with fixed collocation.
struct Window {
    lo: f64,
    hi: f64,
    step: f64,
    colloc: Collocation,
}

fn plan_windows(domain: &Domain, k_lo: f64, k_hi: f64, settings: &SolverSettings) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut a = k_lo;
    while a < k_hi {
        let b = (a + 1.0 + settings.window_fraction * a).min(k_hi);
        out.push((a, b));
        a = b;
    }
    let _ = domain;
    out
}

fn make_window(domain: &Domain, lo: f64, hi: f64, settings: &SolverSettings, stream: u64, step_div: f64) -> Window {
    let step = mean_kappa_spacing(domain, hi) / settings.steps_per_spacing / step_div;
    Window { lo, hi, step, colloc: Collocation::new(domain, hi + step, settings, stream) }
}

/// A refined σ minimum.
#[derive(Debug, Clone)]
struct Candidate {
    kappa: f64,
    sigmas: Vec<f64>,
    /// `|dσ/dκ|` away from the minimum.
    slope: f64,
}

fn sigma1(w: &Window, k: f64) -> f64 {
    w.colloc.sigmas(k).map(|s| s[0]).unwrap_or(f64::INFINITY)
}

/// Vertex of the parabola through three points, if convex.
fn parabola_vertex(x: [f64; 3], f: [f64; 3]) -> Option<(f64, f64)> {
    let d01 = (f[1] - f[0]) / (x[1] - x[0]);
    let d12 = (f[2] - f[1]) / (x[2] - x[1]);
    let curv = (d12 - d01) / (x[2] - x[0]);
    if !(curv > 0.0) {
        return None;
    }
    Some((0.5 * (x[0] + x[1]) - 0.5 * d01 / curv, curv))
}

/// Refines the σ minimum bracketed by grid points `i - 1, i, i + 1`.
///
/// Near a level `σ² ≈ c²(κ − κ*)² + ρ²`, so successive parabolic
/// interpolation through the three samples nearest the current estimate
/// converges in a few evaluations and gives the slope `c` as a by-product.
/// Falls back to Brent when a fit leaves the bracket.
fn refine(w: &Window, grid: &[f64], vals: &[f64], i: usize, settings: &SolverSettings) -> Result<Candidate> {
    let (a, b) = (grid[i - 1], grid[i + 1]);
    let mut pts: Vec<(f64, f64)> = (i - 1..=i + 1).map(|j| (grid[j], vals[j].powi(2))).collect();
    let mut last = grid[i];
    for _ in 0..12 {
        pts.sort_by(|p, q| (p.0 - last).abs().partial_cmp(&(q.0 - last).abs()).unwrap());
        let mut near = [pts[0], pts[1], pts[2]];
        near.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let Some((x, curv)) = parabola_vertex(near.map(|p| p.0), near.map(|p| p.1)) else { break };
        if !(x > a && x < b) || pts.iter().any(|p| p.0 == x) {
            break;
        }
        let sig = w.colloc.sigmas(x)?;
        pts.push((x, sig[0] * sig[0]));
        let moved = (x - last).abs();
        last = x;
        if moved < 0.1 * settings.refine_tol {
            return Ok(Candidate { kappa: x, sigmas: sig, slope: curv.sqrt() });
        }
    }
    let sq = |k: f64| {
        let s = sigma1(w, k);
        s * s
    };
    let (k, _, _) = brent_minimize(sq, a, b, 0.1 * settings.refine_tol);
    let d = 0.0625 * (b - a);
    let s0 = sigma1(w, k);
    let slope = (sigma1(w, k + d).max(sigma1(w, k - d)) - s0).max(0.0) / d;
    Ok(Candidate { kappa: k, sigmas: w.colloc.sigmas(k)?, slope })
}

/// Local minima of sampled σ, refined. `offset` shifts the grid by a
/// fraction of a step.
fn scan_window(w: &Window, offset: f64, settings: &SolverSettings) -> Result<Vec<Candidate>> {
    let (grid, vals) = scan_grid(w, offset);
    let mut out = Vec::new();
    for i in local_minima(&vals) {
        let c = refine(w, &grid, &vals, i, settings)?;
        if c.kappa >= w.lo && c.kappa < w.hi && !probe_neighbours(w, &grid, &vals, i, &c, settings, &mut out)? {
            out.push(c);
        }
    }
    Ok(out)
}

fn scan_grid(w: &Window, offset: f64) -> (Vec<f64>, Vec<f64>) {
    let n = ((w.hi - w.lo) / w.step).ceil() as usize + 2;
    let grid: Vec<f64> = (0..=n).map(|i| w.lo + (i as f64 - 1.0 + offset) * w.step).filter(|k| *k > 0.0).collect();
    let vals: Vec<f64> = grid.par_iter().map(|&k| sigma1(w, k)).collect();
    (grid, vals)
}

/// Interior local minima below the saturation level of σ.
fn local_minima(vals: &[f64]) -> Vec<usize> {
    (1..vals.len().saturating_sub(1))
        .filter(|&i| vals[i] < vals[i - 1] && vals[i] <= vals[i + 1] && vals[i] < 0.5)
        .collect()
}

/// Looks for levels the coarse grid cannot separate from `c`. A nearby
/// level pulls σ below the V of `c` on its side; a very close one shows up
/// as a small second singular value. Returns true when `c` itself should
/// be dropped in favour of better resolved minima.
fn probe_neighbours(
    w: &Window,
    grid: &[f64],
    vals: &[f64],
    i: usize,
    c: &Candidate,
    settings: &SolverSettings,
    out: &mut Vec<Candidate>,
) -> Result<bool> {
    let k = c.kappa;
    let h = w.step;
    let slope = c.slope;
    let mut found = Vec::new();
    if vals[i + 1] < 0.85 * slope * (grid[i + 1] - k) {
        found.extend(fine_scan(w, k, k + 2.0 * h, 12, settings)?);
    }
    if vals[i - 1] < 0.85 * slope * (k - grid[i - 1]) {
        found.extend(fine_scan(w, k - 2.0 * h, k, 12, settings)?);
    }
    let s2 = c.sigmas.get(1).copied().unwrap_or(1.0);
    let gap = s2 / slope.max(1e-300);
    let mut replace = false;
    if gap < 0.5 * h && (s2 >= multiplicity_floor(&c.sigmas, settings) || c.sigmas[0] >= settings.accept_threshold) {
        // Brent can stall between two very close zeros; resolve on a fine grid.
        let close = fine_scan(w, k - 3.0 * gap, k + 3.0 * gap, 16, settings)?;
        replace = close.iter().any(|f| f.sigmas[0] < 0.1 * c.sigmas[0]);
        found.extend(close);
    }
    for f in found {
        let distinct = (replace || (f.kappa - k).abs() > merge_distance(settings))
            && !out.iter().any(|o: &Candidate| (o.kappa - f.kappa).abs() < merge_distance(settings));
        if distinct && f.sigmas[0] < settings.warn_threshold && f.kappa >= w.lo && f.kappa < w.hi {
            out.push(f);
        }
    }
    Ok(replace)
}

/// Refined σ minima on `(a, b)` sampled at `n` intervals.
fn fine_scan(w: &Window, a: f64, b: f64, n: usize, settings: &SolverSettings) -> Result<Vec<Candidate>> {
    let grid: Vec<f64> = (0..=n).map(|j| a + (b - a) * j as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.par_iter().map(|&k| sigma1(w, k)).collect();
    local_minima(&vals).into_iter().map(|j| refine(w, &grid, &vals, j, settings)).collect()
}

/// Minima closer than this are one level; closer true pairs show up as
/// multiplicity instead.
fn merge_distance(settings: &SolverSettings) -> f64 {
    100.0 * settings.refine_tol
}

fn multiplicity_floor(sigmas: &[f64], settings: &SolverSettings) -> f64 {
    settings.accept_threshold.max(settings.degeneracy_ratio * sigmas[0])
}

fn multiplicity(sigmas: &[f64], settings: &SolverSettings) -> usize {
    let floor = multiplicity_floor(sigmas, settings);
    sigmas.iter().take_while(|&&s| s < floor).count().max(1)
}

/// Accepted levels of one window: `(κ, σ's, multiplicity)`.
fn accept(cands: Vec<Candidate>, settings: &SolverSettings, warnings: &mut Vec<String>) -> Vec<Candidate> {
    let mut cands: Vec<Candidate> = cands.into_iter().filter(|c| c.sigmas[0] < settings.warn_threshold).collect();
    cands.sort_by(|a, b| a.kappa.partial_cmp(&b.kappa).unwrap());
    let mut out: Vec<Candidate> = Vec::new();
    for c in cands {
        if let Some(last) = out.last_mut() {
            if (c.kappa - last.kappa).abs() < merge_distance(settings) {
                if c.sigmas[0] < last.sigmas[0] {
                    *last = c;
                }
                continue;
            }
        }
        if c.sigmas[0] >= settings.accept_threshold {
            warnings.push(format!("level at kappa = {:.10} accepted with sigma = {:.3e}", c.kappa, c.sigmas[0]));
        }
        out.push(c);
    }
    out
}

fn build_states(domain: &Domain, w: &Window, c: &Candidate, settings: &SolverSettings) -> Result<Vec<EigState>> {
    let m = multiplicity(&c.sigmas, settings);
    let (sigmas, coeffs) = w.colloc.solve(c.kappa, m)?;
    let mut out = Vec::with_capacity(m);
    for (rank, coeff) in coeffs.into_iter().enumerate() {
        let mut st = EigState {
            index: 0,
            energy: c.kappa * c.kappa,
            kappa: c.kappa,
            sigma_min: sigmas[rank],
            multiplicity: m,
            multiplicity_rank: rank,
            basis: w.colloc.basis(c.kappa),
            coefficients: coeff,
            raw_norm: 1.0,
            norm_check: None,
            trace: Vec::new(),
            flags: Vec::new(),
        };
        if st.sigma_min >= settings.accept_threshold {
            st.flags.push(format!("sigma {:.3e} above acceptance threshold", st.sigma_min));
        }
        fill_trace(domain, &mut st, settings);
        out.push(normalize(domain, st, settings));
    }
    Ok(out)
}

/// Solves one window: scan, refine, resolve multiplicities.
fn solve_window(w: &Window, settings: &SolverSettings, warnings: &mut Vec<String>) -> Result<Vec<Candidate>> {
    let cands = scan_window(w, 0.0, settings)?;
    Ok(accept(cands, settings, warnings))
}

/// Verification scan on a half-step-shifted grid; returns refined dips
/// with no accepted level within a step.
fn verify_window(w: &Window, levels: &[f64], settings: &SolverSettings) -> Result<Vec<f64>> {
    let (grid, vals) = scan_grid(w, 0.5);
    let mut out: Vec<f64> = Vec::new();
    for i in local_minima(&vals) {
        if levels.iter().any(|k| (k - grid[i]).abs() < w.step) {
            continue;
        }
        let c = refine(w, &grid, &vals, i, settings)?;
        let known = levels.iter().chain(&out).any(|k| (k - c.kappa).abs() < merge_distance(settings));
        if !known && c.sigmas[0] < settings.warn_threshold && c.kappa >= w.lo && c.kappa < w.hi {
            out.push(c.kappa);
        }
    }
    Ok(out)
}

fn weyl_band(domain: &Domain, kappas: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    // Count at midpoints between consecutive levels inside the window.
    let mut worst: f64 = 0.0;
    let e_hi = hi * hi;
    for (i, k) in kappas.iter().enumerate() {
        if *k < lo || *k >= hi {
            continue;
        }
        let next = kappas.get(i + 1).copied().unwrap_or(hi);
        let e = 0.5 * (k * k + next * next);
        worst = worst.max(((i + 1) as f64 - mean_count(domain, e)).abs());
    }
    (worst, 3.0 + 0.5 * e_hi.powf(0.25))
}

/// Compares a spectrum against the mean count and a shifted verification
/// scan, window by window.
pub fn audit_spectrum(spectrum: &Spectrum, domain: &Domain) -> Result<AuditReport> {
    if spectrum.states.len() < 50 {
        return Err(Error::Statistics(format!("audit needs at least 50 levels, got {}", spectrum.states.len())));
    }
    let settings = &spectrum.settings;
    let k_lo = spectrum.e_min.max(0.0).sqrt().max(first_level_bound(domain));
    let k_hi = spectrum.e_max.sqrt();
    let kappas: Vec<f64> = spectrum.states.iter().map(|s| s.kappa).collect();
    let mut windows = Vec::new();
    for (wi, (lo, hi)) in plan_windows(domain, k_lo, k_hi, settings).into_iter().enumerate() {
        let w = make_window(domain, lo, hi, settings, wi as u64, 1.0);
        windows.push(audit_window(domain, &w, &kappas, settings)?);
    }
    Ok(AuditReport { windows, rescans: 0 })
}

fn audit_window(domain: &Domain, w: &Window, kappas: &[f64], settings: &SolverSettings) -> Result<WindowReport> {
    let (max_deviation, band) = weyl_band(domain, kappas, w.lo, w.hi);
    let unmatched = verify_window(w, kappas, settings)?;
    let levels = kappas.iter().filter(|k| **k >= w.lo && **k < w.hi).count();
    Ok(WindowReport {
        kappa_lo: w.lo,
        kappa_hi: w.hi,
        step: w.step,
        levels,
        max_deviation,
        band,
        flagged: max_deviation > band || !unmatched.is_empty(),
        resolved: max_deviation <= band,
        unmatched,
    })
}

/// Lower bound on the first wavenumber (Faber–Krahn).
fn first_level_bound(domain: &Domain) -> f64 {
    0.9 * 2.404_825_557_695_773 * (PI / domain.area()).sqrt()
}

/// All Dirichlet levels with `E_min < E ≤ E_max`, audited.
pub fn find_eigenvalues(domain: &Domain, e_min: f64, e_max: f64, settings: &SolverSettings) -> Result<Spectrum> {
    if !(e_max > e_min && e_min >= 0.0) {
        return Err(Error::InvalidParameter(format!("energy range ({e_min}, {e_max}] is empty")));
    }
    let k_lo = e_min.sqrt().max(first_level_bound(domain));
    let k_hi = e_max.sqrt();
    let mut warnings = Vec::new();
    let mut all: Vec<(usize, Candidate)> = Vec::new();
    let mut windows = Vec::new();
    let mut reports = Vec::new();
    let mut rescans = 0;
    let plan = plan_windows(domain, k_lo, k_hi, settings);
    for (wi, &(lo, hi)) in plan.iter().enumerate() {
        let w = make_window(domain, lo, hi, settings, wi as u64, 1.0);
        for c in solve_window(&w, settings, &mut warnings)? {
            all.push((wi, c));
        }
        windows.push(w);
    }
    // Audit. Verified dips are real levels the main scan missed and are
    // added directly; a remaining count deficit triggers halved-step rescans.
    for (wi, base) in windows.iter().enumerate() {
        let mut rescan: Option<Window> = None;
        let mut attempt = 0;
        loop {
            let w = rescan.as_ref().unwrap_or(base);
            let mut report = audit_window(domain, w, &sorted_kappas(&all, settings), settings)?;
            for &k in &report.unmatched {
                all.push((wi, Candidate { kappa: k, sigmas: w.colloc.sigmas(k)?, slope: 0.0 }));
            }
            let (dev, band) = weyl_band(domain, &sorted_kappas(&all, settings), w.lo, w.hi);
            report.resolved = dev <= band;
            if report.resolved {
                reports.push(report);
                break;
            }
            if attempt == settings.max_rescans {
                return Err(Error::IncompleteSpectrum(format!(
                    "window kappa in [{:.6}, {:.6}): {} levels, deviation {:.2} (band {:.2}) after {attempt} rescans",
                    report.kappa_lo, report.kappa_hi, report.levels, dev, band
                )));
            }
            attempt += 1;
            rescans += 1;
            let finer = make_window(domain, base.lo, base.hi, settings, wi as u64, f64::powi(2.0, attempt as i32));
            let known = sorted_kappas(&all, settings);
            for c in solve_window(&finer, settings, &mut warnings)? {
                if !known.iter().any(|k| (k - c.kappa).abs() < merge_distance(settings)) {
                    all.push((wi, c));
                }
            }
            rescan = Some(finer);
        }
    }
    // States.
    all.sort_by(|a, b| a.1.kappa.partial_cmp(&b.1.kappa).unwrap());
    let mut states = Vec::new();
    for (wi, c) in &all {
        let e = c.kappa * c.kappa;
        if e <= e_min || e > e_max {
            continue;
        }
        states.extend(build_states(domain, &windows[*wi], c, settings)?);
    }
    finish_states(domain, &mut states, settings);
    Ok(Spectrum {
        fingerprint: domain.fingerprint(),
        settings: settings.clone(),
        e_min,
        e_max,
        states,
        audit: Some(AuditReport { windows: reports, rescans }),
        warnings,
    })
}

/// Level wavenumbers, degenerate groups repeated.
fn sorted_kappas(all: &[(usize, Candidate)], settings: &SolverSettings) -> Vec<f64> {
    let mut ks: Vec<f64> =
        all.iter().flat_map(|(_, c)| std::iter::repeat_n(c.kappa, multiplicity(&c.sigmas, settings))).collect();
    ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ks
}

fn finish_states(domain: &Domain, states: &mut [EigState], settings: &SolverSettings) {
    let every = if settings.norm_check_fraction > 0.0 { (1.0 / settings.norm_check_fraction).round().max(1.0) as usize } else { 0 };
    for (i, st) in states.iter_mut().enumerate() {
        st.index = i;
        if every > 0 && i % every == 0 {
            let n = sampled_norm(domain, st, settings.norm_check_points, settings.seed ^ i as u64);
            st.norm_check = Some(n);
            if (n - 1.0).abs() > 0.02 {
                st.flags.push(format!("normalization-suspect: sampled norm {n:.4}"));
            }
        }
    }
}

/// Levels up to the `n`-th, estimated from the mean count with a margin.
pub fn first_levels(domain: &Domain, n: usize, settings: &SolverSettings) -> Result<Spectrum> {
    // Invert the mean count with a fluctuation margin.
    let target = n as f64 + 8.0 + 0.05 * n as f64;
    let (mut lo, mut hi) = (1.0, 10.0);
    while mean_count(domain, hi) < target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_count(domain, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut spec = find_eigenvalues(domain, 0.0, hi, settings)?;
    if spec.states.len() < n {
        return Err(Error::IncompleteSpectrum(format!("found {} levels below E = {hi:.3}, wanted {n}", spec.states.len())));
    }
    spec.states.truncate(n);
    spec.e_max = spec.states[n - 1].energy;
    Ok(spec)
}

const CACHE_FORMAT: &str = "billiard-spectrum v1";

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    fingerprint: String,
    settings_hash: String,
    settings: SolverSettings,
    e_min: f64,
    e_max: f64,
    count: usize,
    audit: Option<AuditReport>,
    warnings: Vec<String>,
}

impl Spectrum {
    /// JSON-lines cache: a header, then one state per line; written to a
    /// temporary file and renamed.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            let header = CacheHeader {
                format: CACHE_FORMAT.into(),
                fingerprint: self.fingerprint.clone(),
                settings_hash: self.settings.hash(),
                settings: self.settings.clone(),
                e_min: self.e_min,
                e_max: self.e_max,
                count: self.states.len(),
                audit: self.audit.clone(),
                warnings: self.warnings.clone(),
            };
            writeln!(f, "{}", serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?)?;
            for s in &self.states {
                writeln!(f, "{}", serde_json::to_string(s).map_err(|e| Error::Format(e.to_string()))?)?;
            }
            f.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut lines = std::io::BufReader::new(f).lines();
        let header: CacheHeader = serde_json::from_str(&lines.next().ok_or_else(|| Error::Format("empty spectrum cache".into()))??)
            .map_err(|e| Error::Format(format!("spectrum header: {e}")))?;
        if header.format != CACHE_FORMAT {
            return Err(Error::Format(format!("unsupported spectrum cache '{}'", header.format)));
        }
        let mut states = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            states.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("spectrum state: {e}")))?);
        }
        if states.len() != header.count {
            return Err(Error::Format(format!("spectrum cache holds {} states, header says {}", states.len(), header.count)));
        }
        Ok(Spectrum {
            fingerprint: header.fingerprint,
            settings: header.settings,
            e_min: header.e_min,
            e_max: header.e_max,
            states,
            audit: header.audit,
            warnings: header.warnings,
        })
    }

    /// True when the cache at `path` was made for this domain and settings.
    pub fn cache_matches(path: &Path, domain: &Domain, settings: &SolverSettings) -> bool {
        let Ok(f) = std::fs::File::open(path) else { return false };
        let Some(Ok(line)) = std::io::BufReader::new(f).lines().next() else { return false };
        match serde_json::from_str::<CacheHeader>(&line) {
            Ok(h) => h.format == CACHE_FORMAT && h.fingerprint == domain.fingerprint() && h.settings_hash == settings.hash(),
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    #[test]
    fn square_sigma_at_and_away_from_level() {
        let d = Domain::new(DomainSpec::rectangle(1.0, 1.0)).unwrap();
        let s = SolverSettings::default();
        let k = (2.0 * PI * PI).sqrt();
        assert!(sigma(&d, k, &s).unwrap() < 1e-6);
        assert!(sigma(&d, 3.0, &s).unwrap() > 0.1);
    }

    #[test]
    fn quarter_disk_first_level() {
        let d = Domain::new(DomainSpec::quarter_circle(1.0)).unwrap();
        let k = crate::bessel::bessel_j_zero(2.0, 1);
        assert!(sigma(&d, k, &SolverSettings::default()).unwrap() < 1e-6);
    }

    #[test]
    fn reentrant_basis_vanishes_on_corner_edges() {
        let d = Domain::new(DomainSpec::mushroom(1.0, 1.0, 0.5)).unwrap();
        let b = BasisSet::for_domain(&d, 7.0, 12);
        assert!((b.corner_angle - 1.5 * PI).abs() < 1e-15);
        for q in [[0.5, -0.3], [0.8, 0.0], [0.5, -0.99], [0.99, 0.0]] {
            for v in b.values(q) {
                assert!(v.abs() < 1e-14, "{q:?}: {v}");
            }
        }
        // Stem interior is at θ ∈ (π, 3π/2).
        let (_, th) = b.polar([0.25, -0.5]);
        assert!(th > PI && th < 1.5 * PI);
    }

    #[test]
    fn spectrum_cache_round_trip() {
        let d = Domain::new(DomainSpec::rectangle(1.0, 1.0)).unwrap();
        let s = SolverSettings { norm_check_fraction: 0.0, ..SolverSettings::default() };
        let spec = find_eigenvalues(&d, 0.0, 60.0, &s).unwrap();
        assert_eq!(spec.states.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.jsonl");
        spec.save(&p).unwrap();
        assert!(Spectrum::cache_matches(&p, &d, &s));
        let other = SolverSettings { points_per_wavelength: 11.0, ..s.clone() };
        assert!(!Spectrum::cache_matches(&p, &d, &other));
        assert_eq!(Spectrum::load(&p).unwrap(), spec);
    }
}
