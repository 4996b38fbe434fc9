//! Billiard domains and their arc-length parameterized boundaries.
//!
//! Boundaries are traversed counter-clockwise, so the inward normal is the
//! unit tangent rotated by +90°. Arc length `s` starts at the first vertex of
//! the first segment.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub type Point = [f64; 2];

/// Distance below which a point counts as lying on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Mushroom,
    Cosine,
    QuarterEllipse,
    Rectangle,
    QuarterCircle,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Mushroom => "mushroom",
            DomainKind::Cosine => "cosine",
            DomainKind::QuarterEllipse => "quarter_ellipse",
            DomainKind::Rectangle => "rectangle",
            DomainKind::QuarterCircle => "quarter_circle",
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            DomainKind::Mushroom => &["R", "l", "a"],
            DomainKind::Cosine => &["a", "h", "h_c"],
            DomainKind::QuarterEllipse => &["r_a", "r_b"],
            DomainKind::Rectangle => &["L_x", "L_y"],
            DomainKind::QuarterCircle => &["R"],
        }
    }
}

impl std::str::FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mushroom" => DomainKind::Mushroom,
            "cosine" => DomainKind::Cosine,
            "quarter_ellipse" | "ellipse" => DomainKind::QuarterEllipse,
            "rectangle" => DomainKind::Rectangle,
            "quarter_circle" => DomainKind::QuarterCircle,
            other => return Err(Error::InvalidParameter(format!("unknown domain kind '{other}'"))),
        })
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Domain kind plus its named lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub params: BTreeMap<String, f64>,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, params: &[(&str, f64)]) -> Self {
        DomainSpec { kind, params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    pub fn mushroom(r: f64, l: f64, a: f64) -> Self {
        Self::new(DomainKind::Mushroom, &[("R", r), ("l", l), ("a", a)])
    }

    pub fn cosine(a: f64, h: f64, h_c: f64) -> Self {
        Self::new(DomainKind::Cosine, &[("a", a), ("h", h), ("h_c", h_c)])
    }

    pub fn quarter_ellipse(r_a: f64, r_b: f64) -> Self {
        Self::new(DomainKind::QuarterEllipse, &[("r_a", r_a), ("r_b", r_b)])
    }

    pub fn rectangle(l_x: f64, l_y: f64) -> Self {
        Self::new(DomainKind::Rectangle, &[("L_x", l_x), ("L_y", l_y)])
    }

    pub fn quarter_circle(r: f64) -> Self {
        Self::new(DomainKind::QuarterCircle, &[("R", r)])
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("{} requires parameter '{name}'", self.kind)))
    }

    pub fn validate(&self) -> Result<()> {
        for name in self.kind.parameter_names() {
            let v = self.param(name)?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be a positive length")));
            }
        }
        if let Some(extra) = self.params.keys().find(|k| !self.kind.parameter_names().contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("{} has no parameter '{extra}'", self.kind)));
        }
        match self.kind {
            DomainKind::Mushroom => {
                let (r, a) = (self.param("R")?, self.param("a")?);
                if a >= r {
                    return Err(Error::InvalidParameter(format!("mushroom requires 0 < a < R, got a = {a}, R = {r}")));
                }
            }
            DomainKind::QuarterEllipse => {
                let (ra, rb) = (self.param("r_a")?, self.param("r_b")?);
                if rb >= ra {
                    return Err(Error::InvalidParameter(format!(
                        "quarter_ellipse requires r_b < r_a, got r_a = {ra}, r_b = {rb}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Stable hex digest of kind and exact parameter bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.name().as_bytes());
        for (k, v) in &self.params {
            h.update(b";");
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Straight,
    CircularArc,
    EllipticArc,
    CosineArc,
}

/// Smooth curves parameterized by `t` whose arc length needs quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    /// `(a cos t, b sin t)`, `t ∈ [0, π/2]`.
    Ellipse { a: f64, b: f64 },
    /// `x = a(1 - t)`, `y = h + (h_c/2)(1 + cos(πx/a))`, `t ∈ [0, 1]`.
    Cosine { a: f64, h: f64, h_c: f64 },
}

impl CurveKind {
    pub fn t_range(&self) -> (f64, f64) {
        match self {
            CurveKind::Ellipse { .. } => (0.0, FRAC_PI_2),
            CurveKind::Cosine { .. } => (0.0, 1.0),
        }
    }

    /// Position, first and second derivative with respect to `t`.
    pub fn eval(&self, t: f64) -> (Point, Point, Point) {
        match *self {
            CurveKind::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                ([a * c, b * s], [-a * s, b * c], [-a * c, -b * s])
            }
            CurveKind::Cosine { a, h, h_c } => {
                let x = a * (1.0 - t);
                let (s, c) = (PI * x / a).sin_cos();
                let y = h + 0.5 * h_c * (1.0 + c);
                ([x, y], [-a, 0.5 * h_c * PI * s], [0.0, -0.5 * h_c * PI * PI * c])
            }
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        let (_, d, _) = self.eval(t);
        d[0].hypot(d[1])
    }

    /// Cosine top curve height at `x`.
    pub fn cosine_height(a: f64, h: f64, h_c: f64, x: f64) -> f64 {
        h + 0.5 * h_c * (1.0 + (PI * x / a).cos())
    }
}

/// Cumulative arc-length table for a [`CurveKind`].
#[derive(Debug, Clone)]
pub struct ArcTable {
    curve: CurveKind,
    t0: f64,
    dt: f64,
    knots: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const ARC_PANELS: usize = 256;
const ARC_ORDER: usize = 16;

impl ArcTable {
    pub fn new(curve: CurveKind) -> Self {
        let (t0, t1) = curve.t_range();
        let (nodes, weights) = gauss_legendre(ARC_ORDER);
        let dt = (t1 - t0) / ARC_PANELS as f64;
        let mut table = ArcTable { curve, t0, dt, knots: vec![0.0], nodes, weights };
        let mut acc = 0.0;
        for p in 0..ARC_PANELS {
            let lo = t0 + p as f64 * dt;
            acc += table.panel_integral(lo, lo + dt);
            table.knots.push(acc);
        }
        table
    }

    fn panel_integral(&self, lo: f64, hi: f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * self.curve.speed(mid + half * x)).sum::<f64>() * half
    }

    pub fn curve(&self) -> CurveKind {
        self.curve
    }

    pub fn length(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Arc length from the curve start to parameter `t`.
    pub fn s_of_t(&self, t: f64) -> f64 {
        let p = (((t - self.t0) / self.dt).floor().max(0.0) as usize).min(ARC_PANELS - 1);
        let lo = self.t0 + p as f64 * self.dt;
        self.knots[p] + self.panel_integral(lo, t)
    }

    /// Inverse of [`Self::s_of_t`] by bracketed Newton iteration.
    pub fn t_of_s(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let p = match self.knots.binary_search_by(|k| k.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.t0 + i as f64 * self.dt,
            Err(i) => i.saturating_sub(1).min(ARC_PANELS - 1),
        };
        let mut lo = self.t0 + p as f64 * self.dt;
        let mut hi = lo + self.dt;
        let frac = (s - self.knots[p]) / (self.knots[p + 1] - self.knots[p]);
        let mut t = lo + frac * self.dt;
        for _ in 0..50 {
            let f = self.knots[p] + self.panel_integral(self.t0 + p as f64 * self.dt, t) - s;
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let step = f / self.curve.speed(t);
            let mut next = t - step;
            if next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() < 1e-15 {
                return next;
            }
            t = next;
        }
        t
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Line { start: Point, end: Point },
    /// Counter-clockwise arc from angle `phi0` to `phi1`.
    Circle { center: Point, radius: f64, phi0: f64, phi1: f64 },
    Curve(ArcTable),
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: usize,
    pub kind: SegmentKind,
    pub s_start: f64,
    pub length: f64,
    pub shape: Shape,
}

impl Segment {
    fn new(kind: SegmentKind, shape: Shape) -> Self {
        let length = match &shape {
            Shape::Line { start, end } => (end[0] - start[0]).hypot(end[1] - start[1]),
            Shape::Circle { radius, phi0, phi1, .. } => radius * (phi1 - phi0),
            Shape::Curve(table) => table.length(),
        };
        Segment { id: 0, kind, s_start: 0.0, length, shape }
    }

    /// Position, unit tangent and signed curvature at local arc length `u`.
    pub fn frame(&self, u: f64) -> (Point, Point, f64) {
        match &self.shape {
            Shape::Line { start, end } => {
                let t = [(end[0] - start[0]) / self.length, (end[1] - start[1]) / self.length];
                ([start[0] + u * t[0], start[1] + u * t[1]], t, 0.0)
            }
            Shape::Circle { center, radius, phi0, .. } => {
                let phi = phi0 + u / radius;
                let (s, c) = phi.sin_cos();
                ([center[0] + radius * c, center[1] + radius * s], [-s, c], 1.0 / radius)
            }
            Shape::Curve(table) => {
                let t = table.t_of_s(u);
                let (p, d, dd) = table.curve().eval(t);
                let sp = d[0].hypot(d[1]);
                let curv = (d[0] * dd[1] - d[1] * dd[0]) / (sp * sp * sp);
                (p, [d[0] / sp, d[1] / sp], curv)
            }
        }
    }

    pub fn start(&self) -> Point {
        self.frame(0.0).0
    }

    pub fn end(&self) -> Point {
        self.frame(self.length).0
    }

    /// Local arc length of a point assumed to lie on this segment.
    pub fn local_s_of(&self, q: Point) -> f64 {
        let u = match &self.shape {
            Shape::Line { start, end } => {
                let t = [(end[0] - start[0]) / self.length, (end[1] - start[1]) / self.length];
                (q[0] - start[0]) * t[0] + (q[1] - start[1]) * t[1]
            }
            Shape::Circle { center, radius, phi0, .. } => {
                let mut phi = (q[1] - center[1]).atan2(q[0] - center[0]);
                if phi < phi0 - PI {
                    phi += 2.0 * PI;
                }
                radius * (phi - phi0)
            }
            Shape::Curve(table) => match table.curve() {
                CurveKind::Ellipse { a, b } => table.s_of_t((q[1] / b).atan2(q[0] / a)),
                CurveKind::Cosine { a, .. } => table.s_of_t(1.0 - q[0] / a),
            },
        };
        u.clamp(0.0, self.length)
    }

    /// Distance estimate from `q` to this segment, exact for lines and
    /// circles and first-order accurate near curved arcs.
    pub fn distance(&self, q: Point) -> f64 {
        match &self.shape {
            Shape::Line { start, end } => {
                let d = [end[0] - start[0], end[1] - start[1]];
                let w = [q[0] - start[0], q[1] - start[1]];
                let t = ((w[0] * d[0] + w[1] * d[1]) / (self.length * self.length)).clamp(0.0, 1.0);
                (w[0] - t * d[0]).hypot(w[1] - t * d[1])
            }
            Shape::Circle { center, radius, phi0, phi1 } => {
                let (dx, dy) = (q[0] - center[0], q[1] - center[1]);
                let mut phi = dy.atan2(dx);
                if phi < phi0 - PI {
                    phi += 2.0 * PI;
                }
                if phi >= *phi0 && phi <= *phi1 {
                    (dx.hypot(dy) - radius).abs()
                } else {
                    let a = self.start();
                    let b = self.end();
                    (q[0] - a[0]).hypot(q[1] - a[1]).min((q[0] - b[0]).hypot(q[1] - b[1]))
                }
            }
            Shape::Curve(table) => {
                let ends = {
                    let a = self.start();
                    let b = self.end();
                    (q[0] - a[0]).hypot(q[1] - a[1]).min((q[0] - b[0]).hypot(q[1] - b[1]))
                };
                let near = match table.curve() {
                    CurveKind::Ellipse { a, b } => {
                        if q[0] >= 0.0 && q[1] >= 0.0 {
                            let f = (q[0] / a).powi(2) + (q[1] / b).powi(2) - 1.0;
                            let g = (2.0 * q[0] / (a * a)).hypot(2.0 * q[1] / (b * b));
                            if g > 0.0 { f.abs() / g } else { f64::INFINITY }
                        } else {
                            f64::INFINITY
                        }
                    }
                    CurveKind::Cosine { a, h, h_c } => {
                        if (0.0..=a).contains(&q[0]) {
                            let y = CurveKind::cosine_height(a, h, h_c, q[0]);
                            let dy = -0.5 * h_c * PI / a * (PI * q[0] / a).sin();
                            (q[1] - y).abs() / (1.0 + dy * dy).sqrt()
                        } else {
                            f64::INFINITY
                        }
                    }
                };
                near.min(ends)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub s: f64,
    pub position: Point,
    /// Interior angle.
    pub angle: f64,
    /// Segment ending at the corner, segment starting at it.
    pub segments: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub s: f64,
    pub position: Point,
    /// Tangent angle in `[0, 2π)`.
    pub tangent_angle: f64,
    pub tangent: Point,
    pub normal: Point,
    pub curvature: f64,
    pub segment: usize,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Boundary,
    Outside,
}

/// An immutable billiard domain.
#[derive(Debug, Clone)]
pub struct Domain {
    spec: DomainSpec,
    segments: Vec<Segment>,
    corners: Vec<Corner>,
    perimeter: f64,
    area: f64,
    bbox: [f64; 4],
}

impl Domain {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        let p = |n: &str| spec.param(n).unwrap();
        let line = |a: Point, b: Point| Segment::new(SegmentKind::Straight, Shape::Line { start: a, end: b });
        let (segments, corner_angles, area, bbox) = match spec.kind {
            DomainKind::Rectangle => {
                let (lx, ly) = (p("L_x"), p("L_y"));
                (
                    vec![
                        line([0.0, 0.0], [lx, 0.0]),
                        line([lx, 0.0], [lx, ly]),
                        line([lx, ly], [0.0, ly]),
                        line([0.0, ly], [0.0, 0.0]),
                    ],
                    vec![FRAC_PI_2; 4],
                    lx * ly,
                    [0.0, 0.0, lx, ly],
                )
            }
            DomainKind::QuarterCircle => {
                let r = p("R");
                (
                    vec![
                        line([0.0, 0.0], [r, 0.0]),
                        Segment::new(
                            SegmentKind::CircularArc,
                            Shape::Circle { center: [0.0, 0.0], radius: r, phi0: 0.0, phi1: FRAC_PI_2 },
                        ),
                        line([0.0, r], [0.0, 0.0]),
                    ],
                    vec![FRAC_PI_2; 3],
                    PI * r * r / 4.0,
                    [0.0, 0.0, r, r],
                )
            }
            DomainKind::Mushroom => {
                let (r, l, a) = (p("R"), p("l"), p("a"));
                (
                    vec![
                        line([0.0, -l], [a, -l]),
                        line([a, -l], [a, 0.0]),
                        line([a, 0.0], [r, 0.0]),
                        Segment::new(
                            SegmentKind::CircularArc,
                            Shape::Circle { center: [0.0, 0.0], radius: r, phi0: 0.0, phi1: FRAC_PI_2 },
                        ),
                        line([0.0, r], [0.0, -l]),
                    ],
                    vec![FRAC_PI_2, FRAC_PI_2, 1.5 * PI, FRAC_PI_2, FRAC_PI_2],
                    PI * r * r / 4.0 + a * l,
                    [0.0, -l, r, r],
                )
            }
            DomainKind::QuarterEllipse => {
                let (ra, rb) = (p("r_a"), p("r_b"));
                (
                    vec![
                        line([0.0, 0.0], [ra, 0.0]),
                        Segment::new(
                            SegmentKind::EllipticArc,
                            Shape::Curve(ArcTable::new(CurveKind::Ellipse { a: ra, b: rb })),
                        ),
                        line([0.0, rb], [0.0, 0.0]),
                    ],
                    vec![FRAC_PI_2; 3],
                    PI * ra * rb / 4.0,
                    [0.0, 0.0, ra, rb],
                )
            }
            DomainKind::Cosine => {
                let (a, h, hc) = (p("a"), p("h"), p("h_c"));
                (
                    vec![
                        line([0.0, 0.0], [a, 0.0]),
                        line([a, 0.0], [a, h]),
                        Segment::new(
                            SegmentKind::CosineArc,
                            Shape::Curve(ArcTable::new(CurveKind::Cosine { a, h, h_c: hc })),
                        ),
                        line([0.0, h + hc], [0.0, 0.0]),
                    ],
                    vec![FRAC_PI_2; 4],
                    a * (h + 0.5 * hc),
                    [0.0, 0.0, a, h + hc],
                )
            }
        };
        let mut segments = segments;
        let mut s = 0.0;
        for (i, seg) in segments.iter_mut().enumerate() {
            seg.id = i;
            seg.s_start = s;
            s += seg.length;
        }
        let n = segments.len();
        let corners = (0..n)
            .map(|i| Corner {
                s: segments[i].s_start,
                position: segments[i].start(),
                angle: corner_angles[i],
                segments: ((i + n - 1) % n, i),
            })
            .collect();
        Ok(Domain { spec, segments, corners, perimeter: s, area, bbox })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn kind(&self) -> DomainKind {
        self.spec.kind
    }

    pub fn param(&self, name: &str) -> f64 {
        self.spec.param(name).expect("validated at construction")
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    /// `[x_min, y_min, x_max, y_max]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        self.bbox
    }

    pub fn fingerprint(&self) -> String {
        self.spec.fingerprint()
    }

    /// Largest distance from `origin` to any boundary point.
    pub fn max_radius_from(&self, origin: Point) -> f64 {
        let mut r: f64 = 0.0;
        for seg in &self.segments {
            let n = 64;
            for k in 0..=n {
                let (q, _, _) = seg.frame(seg.length * k as f64 / n as f64);
                r = r.max((q[0] - origin[0]).hypot(q[1] - origin[1]));
            }
        }
        r
    }

    pub fn wrap_s(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.perimeter);
        if w >= self.perimeter { 0.0 } else { w }
    }

    pub fn segment_at(&self, s: f64) -> usize {
        let s = self.wrap_s(s);
        self.segments.partition_point(|seg| seg.s_start <= s).saturating_sub(1)
    }

    pub fn boundary_point(&self, s: f64) -> BoundaryPoint {
        let s = self.wrap_s(s);
        let seg = &self.segments[self.segment_at(s)];
        let (position, tangent, curvature) = seg.frame((s - seg.s_start).min(seg.length));
        BoundaryPoint {
            s,
            position,
            tangent_angle: tangent[1].atan2(tangent[0]).rem_euclid(2.0 * PI),
            tangent,
            normal: [-tangent[1], tangent[0]],
            curvature,
            segment: seg.id,
            kind: seg.kind,
        }
    }

    pub fn distance_to_boundary(&self, q: Point) -> f64 {
        self.segments.iter().map(|s| s.distance(q)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, q: Point) -> Containment {
        if self.distance_to_boundary(q) <= BOUNDARY_TOL {
            Containment::Boundary
        } else if self.inside_open(q) {
            Containment::Inside
        } else {
            Containment::Outside
        }
    }

    pub fn is_inside(&self, q: Point) -> bool {
        self.contains(q) == Containment::Inside
    }

    fn inside_open(&self, q: Point) -> bool {
        let [x, y] = q;
        match self.spec.kind {
            DomainKind::Rectangle => x > 0.0 && y > 0.0 && x < self.param("L_x") && y < self.param("L_y"),
            DomainKind::QuarterCircle => x > 0.0 && y > 0.0 && x.hypot(y) < self.param("R"),
            DomainKind::Mushroom => {
                let (r, l, a) = (self.param("R"), self.param("l"), self.param("a"));
                (x > 0.0 && y >= 0.0 && x.hypot(y) < r) || (x > 0.0 && x < a && y > -l && y <= 0.0)
            }
            DomainKind::QuarterEllipse => {
                let (ra, rb) = (self.param("r_a"), self.param("r_b"));
                x > 0.0 && y > 0.0 && (x / ra).powi(2) + (y / rb).powi(2) < 1.0
            }
            DomainKind::Cosine => {
                let (a, h, hc) = (self.param("a"), self.param("h"), self.param("h_c"));
                x > 0.0 && x < a && y > 0.0 && y < CurveKind::cosine_height(a, h, hc, x)
            }
        }
    }
}
