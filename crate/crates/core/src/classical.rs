//! Classical billiard flow, invariant-region classifiers and the
//! coefficients of the partial level counting function.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Containment, CurveKind, Domain, DomainKind, Point, Segment, SegmentKind, Shape};

/// Tangential momentum and arc length of an outgoing ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Birkhoff {
    pub s: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    pub coord: Birkhoff,
    pub position: Point,
    /// Outgoing unit velocity after specular reflection.
    pub direction: Point,
    pub segment: usize,
    pub travel: f64,
    pub grazing: bool,
}

const CORNER_TOL: f64 = 1e-10;
const GRAZING_TOL: f64 = 1e-10;
const T_MIN: f64 = 1e-12;

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Smallest travel distance `t > T_MIN` at which the ray meets `seg`.
///
/// `from_self` marks rays that start on `seg` itself, whose trivial root at
/// `t = 0` is removed analytically.
fn ray_hit(seg: &Segment, q: Point, v: Point, from_self: bool) -> Option<f64> {
    match &seg.shape {
        Shape::Line { start, end } => {
            if from_self {
                return None;
            }
            let d = [end[0] - start[0], end[1] - start[1]];
            let denom = cross(v, d);
            if denom.abs() < 1e-300 {
                return None;
            }
            let w = [start[0] - q[0], start[1] - q[1]];
            let t = cross(w, d) / denom;
            let u = cross(w, v) / denom;
            (t > T_MIN && (-1e-13..=1.0 + 1e-13).contains(&u)).then_some(t)
        }
        Shape::Circle { center, radius, phi0, phi1 } => {
            let w = [q[0] - center[0], q[1] - center[1]];
            let b = dot(w, v);
            let on_arc = |t: f64| {
                let mut phi = (w[1] + t * v[1]).atan2(w[0] + t * v[0]);
                if phi < phi0 - PI {
                    phi += 2.0 * PI;
                }
                phi >= phi0 - 1e-13 && phi <= phi1 + 1e-13
            };
            if from_self {
                let t = -2.0 * b;
                return (t > T_MIN && on_arc(t)).then_some(t);
            }
            let c = dot(w, w) - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            // Stable pair of roots.
            let r1 = if b > 0.0 { -b - sq } else { -b + sq };
            let r2 = if r1 != 0.0 { c / r1 } else { -2.0 * b };
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            [lo, hi].into_iter().find(|&t| t > T_MIN && on_arc(t))
        }
        Shape::Curve(table) => match table.curve() {
            CurveKind::Ellipse { a, b } => {
                let aa = (v[0] / a).powi(2) + (v[1] / b).powi(2);
                let bb = 2.0 * (q[0] * v[0] / (a * a) + q[1] * v[1] / (b * b));
                let in_quadrant = |t: f64| q[0] + t * v[0] >= -1e-13 && q[1] + t * v[1] >= -1e-13;
                if from_self {
                    let t = -bb / aa;
                    return (t > T_MIN && in_quadrant(t)).then_some(t);
                }
                let cc = (q[0] / a).powi(2) + (q[1] / b).powi(2) - 1.0;
                let disc = bb * bb - 4.0 * aa * cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let qq = -0.5 * (bb + sq.copysign(bb));
                let (r1, r2) = (qq / aa, if qq != 0.0 { cc / qq } else { -bb / aa });
                let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
                [lo, hi].into_iter().find(|&t| t > T_MIN && in_quadrant(t))
            }
            CurveKind::Cosine { a, h, h_c } => cosine_hit(a, h, h_c, q, v, from_self),
        },
    }
}

/// First crossing of the ray with `y = h + (h_c/2)(1 + cos(πx/a))`, `0 ≤ x ≤ a`.
///
/// `g(t) = y(t) - f(x(t))` has `|g''| ≤ M`, so an interval with both ends
/// below `-M Δt²/8` holds no root.
fn cosine_hit(a: f64, h: f64, h_c: f64, q: Point, v: Point, from_self: bool) -> Option<f64> {
    let g = |t: f64| q[1] + t * v[1] - CurveKind::cosine_height(a, h, h_c, q[0] + t * v[0]);
    let bound = 0.5 * h_c * (PI / a).powi(2) * v[0] * v[0];
    let mut lo = T_MIN;
    let mut hi = 8.0 * (a + h + h_c);
    if v[0] > 0.0 {
        lo = lo.max(-q[0] / v[0]);
        hi = hi.min((a - q[0]) / v[0]);
    } else if v[0] < 0.0 {
        lo = lo.max((a - q[0]) / v[0]);
        hi = hi.min(-q[0] / v[0]);
    } else if !(0.0..=a).contains(&q[0]) {
        return None;
    }
    let (ybot, ytop) = (h - 1e-12, h + h_c + 1e-12);
    if v[1] > 0.0 {
        lo = lo.max((ybot - q[1]) / v[1]);
        hi = hi.min((ytop - q[1]) / v[1]);
    } else if v[1] < 0.0 {
        lo = lo.max((ytop - q[1]) / v[1]);
        hi = hi.min((ybot - q[1]) / v[1]);
    } else if !(ybot..=ytop).contains(&q[1]) {
        return None;
    }
    if hi <= lo {
        return None;
    }
    // g(t)/t removes the trivial root when starting on the curve.
    let h_fn = |t: f64| if from_self { g(t) / t } else { g(t) };
    let step = (0.02 * a).min(hi - lo);
    let n = ((hi - lo) / step).ceil() as usize;
    let dt = (hi - lo) / n as f64;
    let mut t0 = lo;
    let mut g0 = if from_self && lo <= 1e-9 { None } else { Some(g(lo)) };
    if let Some(v0) = g0 {
        if v0 >= 0.0 {
            return Some(lo);
        }
    }
    for k in 1..=n {
        let t1 = lo + k as f64 * dt;
        let g1 = g(t1);
        let prev = match g0 {
            Some(v) => v,
            None => {
                // Crossing before the first sample of a ray leaving the curve.
                if g1 >= 0.0 {
                    return crate::quadrature::brent_root(h_fn, 1e-12, t1, 1e-15);
                }
                g0 = Some(g1);
                t0 = t1;
                continue;
            }
        };
        if g1 >= 0.0 {
            return crate::quadrature::brent_root(g, t0, t1, 1e-15);
        }
        if prev.max(g1) + bound * dt * dt / 8.0 >= 0.0 {
            if let Some(t) = subdivide_hit(&g, t0, t1, prev, g1, bound, 0) {
                return Some(t);
            }
        }
        g0 = Some(g1);
        t0 = t1;
    }
    None
}

fn subdivide_hit(g: &impl Fn(f64) -> f64, a: f64, b: f64, ga: f64, gb: f64, m: f64, depth: usize) -> Option<f64> {
    let dt = b - a;
    if ga.max(gb) + m * dt * dt / 8.0 < 0.0 || depth > 48 {
        return None;
    }
    let mid = 0.5 * (a + b);
    let gm = g(mid);
    if gm >= 0.0 {
        return crate::quadrature::brent_root(g, a, mid, 1e-15);
    }
    subdivide_hit(g, a, mid, ga, gm, m, depth + 1).or_else(|| subdivide_hit(g, mid, b, gm, gb, m, depth + 1))
}

fn collide(domain: &Domain, q: Point, v: Point, from: Option<usize>) -> Result<Collision> {
    let mut best: Option<(f64, usize)> = None;
    for seg in domain.segments() {
        if let Some(t) = ray_hit(seg, q, v, from == Some(seg.id)) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, seg.id));
            }
        }
    }
    let (t, id) = best.ok_or_else(|| Error::Unsupported(format!("ray from {q:?} along {v:?} escaped the domain")))?;
    let seg = &domain.segments()[id];
    let hit = [q[0] + t * v[0], q[1] + t * v[1]];
    let u = seg.local_s_of(hit);
    let n = domain.segments().len();
    if u < CORNER_TOL {
        return Err(Error::CornerCollision { corner: id, s: seg.s_start });
    }
    if u > seg.length - CORNER_TOL {
        return Err(Error::CornerCollision { corner: (id + 1) % n, s: seg.s_start + seg.length });
    }
    let (position, tangent, _) = seg.frame(u);
    let normal = [-tangent[1], tangent[0]];
    let vn = dot(v, normal);
    let out = [v[0] - 2.0 * vn * normal[0], v[1] - 2.0 * vn * normal[1]];
    let p = dot(out, tangent).clamp(-1.0, 1.0);
    Ok(Collision {
        coord: Birkhoff { s: seg.s_start + u, p },
        position,
        direction: out,
        segment: id,
        travel: t,
        grazing: 1.0 - p.abs() < GRAZING_TOL,
    })
}

/// First boundary collision of the ray from interior point `q` at angle `beta`.
pub fn next_collision(domain: &Domain, q: Point, beta: f64) -> Result<Collision> {
    let (s, c) = beta.sin_cos();
    collide(domain, q, [c, s], None)
}

pub fn next_collision_dir(domain: &Domain, q: Point, v: Point) -> Result<Collision> {
    collide(domain, q, v, None)
}

/// Outgoing position and unit velocity of a Birkhoff coordinate.
pub fn launch(domain: &Domain, x: Birkhoff) -> (Point, Point, usize) {
    let b = domain.boundary_point(x.s);
    let p = x.p.clamp(-1.0, 1.0);
    let c = (1.0 - p * p).max(0.0).sqrt();
    let v = [p * b.tangent[0] + c * b.normal[0], p * b.tangent[1] + c * b.normal[1]];
    (b.position, v, b.segment)
}

/// One step of the billiard map.
pub fn billiard_map(domain: &Domain, x: Birkhoff) -> Result<Collision> {
    if x.p.abs() >= 1.0 {
        return Err(Error::Grazing { s: x.s });
    }
    let (q, v, seg) = launch(domain, x);
    collide(domain, q, v, Some(seg))
}

/// Invariant phase-space region used as `Γ`.
#[derive(Debug, Clone)]
pub enum RegionSpec {
    Full,
    MushroomRegular,
    MushroomChaotic,
    EllipseRotating,
    EllipseOscillating,
    Mask { mask: Arc<PhaseMask>, complement: bool },
}

impl RegionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RegionSpec::Full => "full",
            RegionSpec::MushroomRegular => "mushroom_regular",
            RegionSpec::MushroomChaotic => "mushroom_chaotic",
            RegionSpec::EllipseRotating => "ellipse_rotating",
            RegionSpec::EllipseOscillating => "ellipse_oscillating",
            RegionSpec::Mask { complement: false, .. } => "mask",
            RegionSpec::Mask { complement: true, .. } => "mask_complement",
        }
    }

    /// The region whose weights add to one with this one.
    pub fn complement(&self) -> Option<RegionSpec> {
        Some(match self {
            RegionSpec::Full => return None,
            RegionSpec::MushroomRegular => RegionSpec::MushroomChaotic,
            RegionSpec::MushroomChaotic => RegionSpec::MushroomRegular,
            RegionSpec::EllipseRotating => RegionSpec::EllipseOscillating,
            RegionSpec::EllipseOscillating => RegionSpec::EllipseRotating,
            RegionSpec::Mask { mask, complement } => {
                RegionSpec::Mask { mask: mask.clone(), complement: !complement }
            }
        })
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, RegionSpec::Mask { .. })
    }

    pub(crate) fn check_domain(&self, domain: &Domain) -> Result<()> {
        let ok = match self {
            RegionSpec::MushroomRegular | RegionSpec::MushroomChaotic => domain.kind() == DomainKind::Mushroom,
            RegionSpec::EllipseRotating | RegionSpec::EllipseOscillating => {
                domain.kind() == DomainKind::QuarterEllipse
            }
            RegionSpec::Mask { mask, .. } => mask.segment < domain.segments().len(),
            RegionSpec::Full => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("region {} does not apply to a {} domain", self.name(), domain.kind())))
        }
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative width of the half-weight band around separatrices.
const SEPARATRIX_TOL: f64 = 1e-12;

fn step_weight(x: f64, scale: f64) -> f64 {
    if x > SEPARATRIX_TOL * scale {
        1.0
    } else if x < -SEPARATRIX_TOL * scale {
        0.0
    } else {
        0.5
    }
}

/// Weight of a cap trajectory being regular: angular momentum about the cap
/// center exceeds the stem half-width.
fn mushroom_regular(domain: &Domain, q: Point, v: Point) -> f64 {
    let a = domain.param("a");
    if q[1] < 0.0 {
        return 0.0;
    }
    step_weight(cross(q, v).abs() - a, domain.param("R"))
}

/// Product of the angular momenta about the two foci.
pub fn ellipse_invariant(domain: &Domain, q: Point, v: Point) -> f64 {
    let (ra, rb) = (domain.param("r_a"), domain.param("r_b"));
    let f = (ra * ra - rb * rb).sqrt();
    let l1 = (q[0] - f) * v[1] - q[1] * v[0];
    let l2 = (q[0] + f) * v[1] - q[1] * v[0];
    l1 * l2
}

fn ellipse_rotating(domain: &Domain, q: Point, v: Point) -> f64 {
    let ra = domain.param("r_a");
    step_weight(ellipse_invariant(domain, q, v), ra * ra)
}

enum Trace {
    Hit(Birkhoff),
    Corner,
    Lost,
}

fn trace_to_segment(domain: &Domain, q: Point, v: Point, from: Option<usize>, segment: usize, max_bounces: usize) -> Trace {
    let mut c = match collide(domain, q, v, from) {
        Ok(c) => c,
        Err(Error::CornerCollision { .. }) => return Trace::Corner,
        Err(_) => return Trace::Lost,
    };
    for _ in 0..max_bounces {
        if c.segment == segment {
            return Trace::Hit(c.coord);
        }
        // Grazing reflection is exact on straight walls.
        if c.grazing && domain.segments()[c.segment].kind != SegmentKind::Straight {
            return Trace::Lost;
        }
        c = match collide(domain, c.position, c.direction, Some(c.segment)) {
            Ok(c) => c,
            Err(Error::CornerCollision { .. }) => return Trace::Corner,
            Err(_) => return Trace::Lost,
        };
    }
    Trace::Lost
}

/// Flows `(q, v)` until it leaves from `segment`; `None` after `max_bounces`
/// or on a corner hit.
pub fn flow_to_segment(
    domain: &Domain,
    q: Point,
    v: Point,
    from: Option<usize>,
    segment: usize,
    max_bounces: usize,
) -> Option<Birkhoff> {
    match trace_to_segment(domain, q, v, from, segment, max_bounces) {
        Trace::Hit(b) => Some(b),
        _ => None,
    }
}

pub const MASK_MAX_BOUNCES: usize = 400;

/// Orbits that never return to the mask segment get weight 0; corner hits
/// are retried with deterministic small rotations.
fn mask_weight(domain: &Domain, mask: &PhaseMask, q: Point, v: Point, from: Option<usize>) -> f64 {
    for k in 0..8 {
        let ang = 1e-9 * ((k + 1) / 2) as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
        let (s, c) = ang.sin_cos();
        let w = [c * v[0] - s * v[1], s * v[0] + c * v[1]];
        match trace_to_segment(domain, q, w, from, mask.segment, MASK_MAX_BOUNCES) {
            Trace::Hit(b) => return mask.weight(b.s, b.p),
            Trace::Corner => continue,
            Trace::Lost => return 0.0,
        }
    }
    0.0
}

/// Region weight `χ_Γ ∈ {0, ½, 1}` of the ray at `q` with unit velocity `v`.
///
/// `from` names the segment `q` lies on, if any.
pub fn classify_state(domain: &Domain, region: &RegionSpec, q: Point, v: Point, from: Option<usize>) -> f64 {
    match region {
        RegionSpec::Full => 1.0,
        RegionSpec::MushroomRegular => mushroom_regular(domain, q, v),
        RegionSpec::MushroomChaotic => 1.0 - mushroom_regular(domain, q, v),
        RegionSpec::EllipseRotating => ellipse_rotating(domain, q, v),
        RegionSpec::EllipseOscillating => 1.0 - ellipse_rotating(domain, q, v),
        RegionSpec::Mask { mask, complement } => {
            let w = mask_weight(domain, mask, q, v, from);
            if *complement { 1.0 - w } else { w }
        }
    }
}

/// `χ_Γ(q, β)` for a point in the closed domain.
pub fn classify_point(domain: &Domain, region: &RegionSpec, q: Point, beta: f64) -> f64 {
    let (s, c) = beta.sin_cos();
    let from = match domain.contains(q) {
        Containment::Boundary => Some(domain.segment_at(nearest_s(domain, q))),
        _ => None,
    };
    classify_state(domain, region, q, [c, s], from)
}

fn nearest_s(domain: &Domain, q: Point) -> f64 {
    let seg = domain
        .segments()
        .iter()
        .min_by(|a, b| a.distance(q).partial_cmp(&b.distance(q)).unwrap())
        .unwrap();
    seg.s_start + seg.local_s_of(q)
}

/// `χ_Γ` at a point of the boundary section.
pub fn classify_birkhoff(domain: &Domain, region: &RegionSpec, x: Birkhoff) -> f64 {
    if let RegionSpec::Mask { mask, complement } = region {
        if domain.segment_at(x.s) == mask.segment {
            let w = mask.weight(x.s, x.p);
            return if *complement { 1.0 - w } else { w };
        }
    }
    let (q, v, seg) = launch(domain, x);
    classify_state(domain, region, q, v, Some(seg))
}

/// Partial-Weyl coefficients of a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylCoefficients {
    pub area: f64,
    pub area_stderr: f64,
    pub length: f64,
    /// −1 Dirichlet, +1 Neumann.
    pub bc_sign: f64,
}

impl WeylCoefficients {
    pub fn dirichlet(area: f64, length: f64) -> Self {
        WeylCoefficients { area, area_stderr: 0.0, length, bc_sign: -1.0 }
    }
}

const MC_CHUNK: usize = 4096;

/// Monte Carlo estimate of the phase-space area of `region`, with its
/// standard error. Deterministic for a fixed seed.
pub fn area_gamma(domain: &Domain, region: &RegionSpec, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    region.check_domain(domain)?;
    if n_samples < 1000 {
        return Err(Error::Statistics(format!("area_gamma needs at least 1000 samples, got {n_samples}")));
    }
    if matches!(region, RegionSpec::Full) {
        return Ok((domain.area(), 0.0));
    }
    let [x0, y0, x1, y1] = domain.bounding_box();
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let want = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let (mut s1, mut s2, mut n) = (0.0, 0.0, 0);
            while n < want {
                let q = [x0 + (x1 - x0) * rng.random::<f64>(), y0 + (y1 - y0) * rng.random::<f64>()];
                let beta = 2.0 * PI * rng.random::<f64>();
                if !domain.is_inside(q) {
                    continue;
                }
                let w = classify_point(domain, region, q, beta);
                s1 += w;
                s2 += w * w;
                n += 1;
            }
            (s1, s2, n)
        })
        .collect();
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0usize);
    for (a, b, c) in sums {
        s1 += a;
        s2 += b;
        n += c;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    Ok((domain.area() * mean, domain.area() * (var / nf).sqrt()))
}

/// Launch direction relative to the boundary in [`length_gamma_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaunchDirection {
    /// Along the tangent, both senses.
    Parallel,
    /// Along the inward normal.
    Perpendicular,
}

/// Boundary weight of one point at offset `eps` from the wall.
fn boundary_weight(domain: &Domain, region: &RegionSpec, s: f64, eps: f64, dir: LaunchDirection) -> f64 {
    let b = domain.boundary_point(s);
    let q = [b.position[0] + eps * b.normal[0], b.position[1] + eps * b.normal[1]];
    let from = if eps == 0.0 { Some(b.segment) } else { None };
    match dir {
        LaunchDirection::Parallel => {
            let t = b.tangent;
            0.5 * (classify_state(domain, region, q, t, from) + classify_state(domain, region, q, [-t[0], -t[1]], from))
        }
        LaunchDirection::Perpendicular => classify_state(domain, region, q, b.normal, from),
    }
}

/// Integral over one segment of a piecewise-constant boundary weight,
/// locating each jump by bisection.
fn integrate_segment(domain: &Domain, seg: &Segment, n: usize, w: &impl Fn(f64) -> f64) -> f64 {
    let n = n.max(8);
    let h = seg.length / n as f64;
    let at = |k: usize| seg.s_start + (k as f64 + 0.5) * h;
    let vals: Vec<f64> = (0..n).map(|k| w(at(k))).collect();
    let _ = domain;
    let mut total = 0.0;
    let mut left = seg.s_start;
    for k in 0..n {
        if k + 1 < n && vals[k + 1] != vals[k] {
            let (mut lo, mut hi) = (at(k), at(k + 1));
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if w(mid) == vals[k] {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 * seg.length.max(1.0) {
                    break;
                }
            }
            let cut = 0.5 * (lo + hi);
            total += vals[k] * (cut - left);
            left = cut;
        }
    }
    total + vals[n - 1] * (seg.s_start + seg.length - left)
}

/// Per-segment boundary-length coefficient of `region`.
pub fn length_gamma_segments(
    domain: &Domain,
    region: &RegionSpec,
    n_boundary_samples: usize,
    eps: f64,
    dir: LaunchDirection,
) -> Result<Vec<f64>> {
    region.check_domain(domain)?;
    let total = domain.perimeter();
    let mut out = Vec::with_capacity(domain.segments().len());
    for seg in domain.segments() {
        let n = (n_boundary_samples as f64 * seg.length / total).ceil() as usize;
        if region.is_analytic() {
            // Closed-form classifiers are evaluated on the wall itself.
            out.push(integrate_segment(domain, seg, n, &|s| boundary_weight(domain, region, s, 0.0, dir)));
        } else {
            let coarse = integrate_segment(domain, seg, n, &|s| boundary_weight(domain, region, s, eps, dir));
            let fine = integrate_segment(domain, seg, n, &|s| boundary_weight(domain, region, s, 0.5 * eps, dir));
            if (coarse - fine).abs() > 0.01 * seg.length {
                return Err(Error::LengthRefinement { segment: seg.id, eps, coarse, fine });
            }
            out.push(fine);
        }
    }
    Ok(out)
}

/// Boundary-length coefficient `L_Γ` for rays launched parallel to the wall.
pub fn length_gamma(domain: &Domain, region: &RegionSpec, n_boundary_samples: usize, eps: f64) -> Result<f64> {
    length_gamma_with(domain, region, n_boundary_samples, eps, LaunchDirection::Parallel)
}

pub fn length_gamma_with(
    domain: &Domain,
    region: &RegionSpec,
    n_boundary_samples: usize,
    eps: f64,
    dir: LaunchDirection,
) -> Result<f64> {
    Ok(length_gamma_segments(domain, region, n_boundary_samples, eps, dir)?.iter().sum())
}

/// Default wall offset for masked regions.
pub fn default_eps(domain: &Domain) -> f64 {
    1e-6 * domain.perimeter()
}

/// Half-weight grid over `(s, p)` restricted to one boundary segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    pub kind: String,
    pub segment: usize,
    pub s_range: (f64, f64),
    pub p_range: (f64, f64),
    pub n_s: usize,
    pub n_p: usize,
    /// Weight in halves (0, 1, 2), row-major in `s`.
    pub cells: Vec<u8>,
}

const MASK_FORMAT: &str = "phase-mask v1";

impl PhaseMask {
    pub fn new(kind: &str, segment: usize, s_range: (f64, f64), n_s: usize, n_p: usize) -> Self {
        PhaseMask {
            kind: kind.to_string(),
            segment,
            s_range,
            p_range: (-1.0, 1.0),
            n_s,
            n_p,
            cells: vec![0; n_s * n_p],
        }
    }

    /// Cell holding `(s, p)`; half-open on the upper edges.
    pub fn cell(&self, s: f64, p: f64) -> Option<(usize, usize)> {
        let fs = (s - self.s_range.0) / (self.s_range.1 - self.s_range.0);
        let fp = (p - self.p_range.0) / (self.p_range.1 - self.p_range.0);
        if !(0.0..=1.0).contains(&fs) || !(0.0..=1.0).contains(&fp) {
            return None;
        }
        let i = ((fs * self.n_s as f64).floor() as usize).min(self.n_s - 1);
        let j = ((fp * self.n_p as f64).floor() as usize).min(self.n_p - 1);
        Some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Birkhoff {
        let ds = (self.s_range.1 - self.s_range.0) / self.n_s as f64;
        let dp = (self.p_range.1 - self.p_range.0) / self.n_p as f64;
        Birkhoff { s: self.s_range.0 + (i as f64 + 0.5) * ds, p: self.p_range.0 + (j as f64 + 0.5) * dp }
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.n_p + j]
    }

    pub fn set(&mut self, i: usize, j: usize, halves: u8) {
        self.cells[i * self.n_p + j] = halves;
    }

    pub fn weight(&self, s: f64, p: f64) -> f64 {
        self.cell(s, p).map_or(0.0, |(i, j)| 0.5 * self.get(i, j) as f64)
    }

    /// Weighted fraction of the section covered by the mask.
    pub fn area_fraction(&self) -> f64 {
        self.cells.iter().map(|&c| c as f64).sum::<f64>() / (2 * self.cells.len()) as f64
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {MASK_FORMAT}")?;
        writeln!(w, "kind = {}", self.kind)?;
        writeln!(w, "segment = {}", self.segment)?;
        writeln!(w, "n_s = {}", self.n_s)?;
        writeln!(w, "n_p = {}", self.n_p)?;
        writeln!(w, "s_range = {:e} {:e}", self.s_range.0, self.s_range.1)?;
        writeln!(w, "p_range = {:e} {:e}", self.p_range.0, self.p_range.1)?;
        writeln!(w, "data")?;
        for i in 0..self.n_s {
            let row: String = (0..self.n_p).map(|j| (b'0' + self.get(i, j)) as char).collect();
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write_to(f)?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("mask file: {m}"));
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| bad("empty"))??;
        if first.trim() != format!("# {MASK_FORMAT}") {
            return Err(bad(&format!("unsupported header '{first}'")));
        }
        let mut mask = PhaseMask::new("", 0, (0.0, 1.0), 1, 1);
        for line in lines.by_ref() {
            let line = line?;
            if line.trim() == "data" {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(&format!("expected key = value, got '{line}'")))?;
            let v = v.trim();
            let pair = |v: &str| -> Result<(f64, f64)> {
                let mut it = v.split_whitespace().map(|t| t.parse::<f64>());
                match (it.next(), it.next()) {
                    (Some(Ok(a)), Some(Ok(b))) => Ok((a, b)),
                    _ => Err(bad(&format!("bad range '{v}'"))),
                }
            };
            match k.trim() {
                "kind" => mask.kind = v.to_string(),
                "segment" => mask.segment = v.parse().map_err(|_| bad("segment"))?,
                "n_s" => mask.n_s = v.parse().map_err(|_| bad("n_s"))?,
                "n_p" => mask.n_p = v.parse().map_err(|_| bad("n_p"))?,
                "s_range" => mask.s_range = pair(v)?,
                "p_range" => mask.p_range = pair(v)?,
                other => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        mask.cells = Vec::with_capacity(mask.n_s * mask.n_p);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if line.len() != mask.n_p {
                return Err(bad("row length does not match n_p"));
            }
            for b in line.bytes() {
                match b {
                    b'0'..=b'2' => mask.cells.push(b - b'0'),
                    _ => return Err(bad("cell values must be 0, 1 or 2")),
                }
            }
        }
        if mask.cells.len() != mask.n_s * mask.n_p {
            return Err(bad("row count does not match n_s"));
        }
        Ok(mask)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Orbit seed and fill origins for [`build_island_mask`].
#[derive(Debug, Clone)]
pub struct IslandSeed {
    /// Point on the outer invariant curve of the island.
    pub orbit: Birkhoff,
    /// Fill origins inside the island; the orbit centroid when empty.
    pub centers: Vec<Birkhoff>,
}

/// Builds a mask for the island bounded by the orbit of `seed.orbit` on
/// the seed's segment, symmetrized under `p → -p`.
pub fn build_island_mask(domain: &Domain, seed: &IslandSeed, n_iter: usize, grid: (usize, usize)) -> Result<PhaseMask> {
    let (n_s, n_p) = grid;
    let segment = domain.segment_at(seed.orbit.s);
    let seg = &domain.segments()[segment];
    let mut mask = PhaseMask::new(&format!("{}_island", domain.kind()), segment, (seg.s_start, seg.s_start + seg.length), n_s, n_p);

    let mut points = Vec::new();
    let mut x = seed.orbit;
    let mut bounces = 0usize;
    while points.len() < n_iter {
        let c = billiard_map(domain, x).map_err(|e| Error::NotAnIsland(format!("orbit stopped: {e}")))?;
        bounces += 1;
        if bounces > 50 * n_iter.max(1) {
            return Err(Error::NotAnIsland("orbit rarely returns to the seed segment".into()));
        }
        if c.segment == segment {
            points.push(c.coord);
        }
        x = c.coord;
    }

    // Escape test on a coarse grid.
    const COARSE: usize = 32;
    let mut coarse = vec![false; COARSE * COARSE];
    for pt in &points {
        for p in [pt.p, -pt.p] {
            if let Some((i, j)) = mask.cell(pt.s, p) {
                coarse[(i * COARSE / n_s) * COARSE + j * COARSE / n_p] = true;
                mask.set(i, j, 1);
            }
        }
    }
    let visited = coarse.iter().filter(|&&v| v).count();
    if visited * 2 > COARSE * COARSE {
        return Err(Error::NotAnIsland(format!("orbit visits {visited} of {} coarse cells", COARSE * COARSE)));
    }

    let centers = if seed.centers.is_empty() {
        let n = points.len() as f64;
        vec![Birkhoff { s: points.iter().map(|p| p.s).sum::<f64>() / n, p: 0.0 }]
    } else {
        seed.centers.clone()
    };
    let mut stack = Vec::new();
    for c in centers {
        for p in [c.p, -c.p] {
            if let Some((i, j)) = mask.cell(c.s, p) {
                if mask.get(i, j) == 0 {
                    mask.set(i, j, 2);
                    stack.push((i, j));
                }
            }
        }
    }
    let mut filled = stack.len();
    while let Some((i, j)) = stack.pop() {
        let mut push = |ii: usize, jj: usize, stack: &mut Vec<(usize, usize)>| {
            if mask.get(ii, jj) == 0 {
                mask.set(ii, jj, 2);
                stack.push((ii, jj));
                filled += 1;
            }
        };
        if i > 0 {
            push(i - 1, j, &mut stack);
        }
        if i + 1 < n_s {
            push(i + 1, j, &mut stack);
        }
        if j > 0 {
            push(i, j - 1, &mut stack);
        }
        if j + 1 < n_p {
            push(i, j + 1, &mut stack);
        }
    }
    if filled * 2 > n_s * n_p {
        return Err(Error::NotAnIsland(format!("fill leaked into {filled} of {} cells", n_s * n_p)));
    }
    let violations = mask_invariance_violations(domain, &mask, 400, 0x15_1a_4d);
    if violations > 0.01 {
        return Err(Error::NotAnIsland(format!("mask not invariant: {:.2}% of orbits change membership", 100.0 * violations)));
    }
    Ok(mask)
}

/// Fraction of sampled interior mask points whose first return to the mask
/// segment leaves the mask.
pub fn mask_invariance_violations(domain: &Domain, mask: &PhaseMask, n_test: usize, seed: u64) -> f64 {
    let inside: Vec<(usize, usize)> = (0..mask.n_s)
        .flat_map(|i| (0..mask.n_p).map(move |j| (i, j)))
        .filter(|&(i, j)| mask.get(i, j) == 2)
        .collect();
    if inside.is_empty() {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0usize;
    let mut tested = 0usize;
    for _ in 0..n_test {
        let (i, j) = inside[rng.random_range(0..inside.len())];
        let x = mask.cell_center(i, j);
        let (q, v, seg) = launch(domain, x);
        if let Some(y) = flow_to_segment(domain, q, v, Some(seg), mask.segment, MASK_MAX_BOUNCES) {
            tested += 1;
            if mask.weight(y.s, y.p) == 0.0 {
                bad += 1;
            }
        }
    }
    if tested == 0 { 0.0 } else { bad as f64 / tested as f64 }
}
