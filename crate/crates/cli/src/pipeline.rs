//! The `solve → classify → weyl` stages, the half-plane check and the
//! summary report. Every stage reads and writes files in the output
//! directory only.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use billiard_core::classical::{
    area_gamma, build_island_mask, default_eps, length_gamma, length_gamma_with, IslandSeed, LaunchDirection, PhaseMask,
    RegionSpec, WeylCoefficients,
};
use billiard_core::classify::{bimodality, classify_states, husimi_grid, WeightRecord};
use billiard_core::geometry::{Domain, DomainKind};
use billiard_core::halfplane::{depletion_profile_with, uniform_grid, DepletionProfile};
use billiard_core::solver::{find_eigenvalues, first_levels, Spectrum};
use billiard_core::weyl::{
    discriminate, fit_coefficients, residual, staircase, top_window, track_boundary_term, Discrimination, FitBasis, Tracking,
    WeylFit,
};
use billiard_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{LevelRequest, MaskSource, RegionConfig, RegionKind, RunConfig};
use crate::table::{format_number, Table};

/// Why a command stopped; each maps to one exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Check(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Check(failed) => write!(f, "{} acceptance check(s) failed: {}", failed.len(), failed.join("; ")),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Unsupported(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

pub type Outcome = Result<(), Failure>;

pub const SPECTRUM_CACHE: &str = "spectrum.jsonl";
pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const WEYL_JSON: &str = "weyl.json";
pub const WEYL_TXT: &str = "weyl_fit.txt";
pub const REGIONS_CSV: &str = "regions.csv";
pub const DEPLETION_CSV: &str = "depletion.csv";
pub const HALFPLANE_JSON: &str = "halfplane.json";
pub const REPORT_TXT: &str = "report.txt";

const BASE_COLUMNS: [&str; 5] = ["index", "E", "kappa", "sigma_min", "multiplicity"];

fn domain(cfg: &RunConfig) -> Result<Domain, Failure> {
    let spec = cfg.domain.clone().ok_or_else(|| Failure::Usage("config has no [domain] section".into()))?;
    Ok(Domain::new(spec)?)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn ensure_out_dir(cfg: &RunConfig) -> Outcome {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_failure(&cfg.out_dir, e))
}

fn cache_fits_request(spec: &Spectrum, req: LevelRequest) -> bool {
    match req {
        LevelRequest::First(n) => spec.states.len() == n && spec.e_min == 0.0,
        LevelRequest::Range { e_min, e_max } => spec.e_min == e_min && spec.e_max == e_max,
    }
}

/// The cached spectrum when it matches domain, settings and request.
fn cached_spectrum(cfg: &RunConfig, domain: &Domain) -> Option<Spectrum> {
    let path = out_path(cfg, SPECTRUM_CACHE);
    if !Spectrum::cache_matches(&path, domain, &cfg.solver) {
        return None;
    }
    let spec = Spectrum::load(&path).ok()?;
    cache_fits_request(&spec, cfg.levels?).then_some(spec)
}

fn spectrum_table(spec: &Spectrum) -> Table {
    let mut t = Table::new(&BASE_COLUMNS);
    for s in &spec.states {
        t.push(vec![
            s.index.to_string(),
            format_number(s.energy),
            format_number(s.kappa),
            format_number(s.sigma_min),
            s.multiplicity.to_string(),
        ]);
    }
    t
}

pub fn solve(cfg: &RunConfig) -> Outcome {
    let domain = domain(cfg)?;
    let req = cfg.levels.ok_or_else(|| Failure::Usage("config has no [spectrum] section".into()))?;
    ensure_out_dir(cfg)?;
    let spec = match cached_spectrum(cfg, &domain) {
        Some(s) => {
            eprintln!("solve: reusing cached spectrum ({} levels)", s.states.len());
            s
        }
        None => {
            eprintln!("solve: computing {} spectrum", domain.kind());
            let s = match req {
                LevelRequest::First(n) => first_levels(&domain, n, &cfg.solver)?,
                LevelRequest::Range { e_min, e_max } => find_eigenvalues(&domain, e_min, e_max, &cfg.solver)?,
            };
            s.save(&out_path(cfg, SPECTRUM_CACHE))?;
            s
        }
    };
    let csv = out_path(cfg, SPECTRUM_CSV);
    spectrum_table(&spec).write(&csv).map_err(|e| io_failure(&csv, e))?;
    let flagged = spec.audit.as_ref().map_or(0, |a| a.flagged().len());
    eprintln!("solve: {} levels, E <= {:.6}, {} audit flags, {} warnings", spec.states.len(), spec.e_max, flagged, spec.warnings.len());
    Ok(())
}

fn load_spectrum(cfg: &RunConfig, domain: &Domain) -> Result<Spectrum, Failure> {
    cached_spectrum(cfg, domain)
        .ok_or_else(|| Failure::Usage(format!("no spectrum cache for this domain and solver settings in '{}'; run solve first", cfg.out_dir.display())))
}

/// Builds or loads the phase-space region of `r`.
fn region_spec(cfg: &RunConfig, domain: &Domain, r: &RegionConfig) -> Result<RegionSpec, Failure> {
    match &r.kind {
        RegionKind::Analytic(_) => Ok(r.analytic_spec().expect("validated at parse")),
        RegionKind::Mask { source, complement } => {
            let path = out_path(cfg, &format!("mask_{}.txt", r.name));
            let mask = match source {
                MaskSource::File(p) => PhaseMask::load(p)?,
                MaskSource::Island { orbit, centers, iterations, grid } => {
                    // Generated masks are written once and reused while the
                    // seed parameters are unchanged.
                    let stamp = path.with_extension("seed");
                    let fresh = std::fs::read_to_string(&stamp).is_ok_and(|s| s == mask_stamp(cfg, r));
                    match PhaseMask::load(&path) {
                        Ok(m) if fresh => m,
                        _ => {
                            eprintln!("region {}: building island mask", r.name);
                            let seed = IslandSeed { orbit: *orbit, centers: centers.clone() };
                            let m = build_island_mask(domain, &seed, *iterations, *grid)?;
                            ensure_out_dir(cfg)?;
                            m.save(&path)?;
                            std::fs::write(&stamp, mask_stamp(cfg, r)).map_err(|e| io_failure(&stamp, e))?;
                            m
                        }
                    }
                }
            };
            Ok(RegionSpec::Mask { mask: Arc::new(mask), complement: *complement })
        }
    }
}

/// Seed parameters a generated mask was made from, stored next to it.
fn mask_stamp(cfg: &RunConfig, r: &RegionConfig) -> String {
    format!("{:?}|{:?}", cfg.domain, r.kind)
}

fn weight_column(r: &RegionConfig) -> String {
    format!("w_{}:{}", r.name, r.method.name())
}

pub fn classify(cfg: &RunConfig) -> Outcome {
    let domain = domain(cfg)?;
    let spec = load_spectrum(cfg, &domain)?;
    if cfg.regions.is_empty() {
        return Err(Failure::Usage("config defines no [region NAME] sections".into()));
    }
    let mut table = spectrum_table(&spec);
    // Complementary analytic regions share one computation.
    let mut memo: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in &cfg.regions {
        let region = region_spec(cfg, &domain, r)?;
        let key = (r.method.name().to_string(), region.name().to_string());
        let weights = match memo.get(&key) {
            Some(w) if region.is_analytic() => w.clone(),
            _ => {
                eprintln!("classify: region {} by {}", r.name, r.method.name());
                let recs = classify_states(&domain, &spec.states, &region, r.method, &cfg.husimi, &cfg.projection)?;
                if region.is_analytic() {
                    let names: Vec<String> = recs.first().map(|x| x.weights.keys().cloned().collect()).unwrap_or_default();
                    for name in names {
                        let w = recs.iter().map(|x| x.weights[&name]).collect();
                        memo.insert((key.0.clone(), name), w);
                    }
                }
                recs.iter().map(|x| x.weights[region.name()]).collect::<Vec<f64>>()
            }
        };
        table.header.push(weight_column(r));
        for (row, w) in table.rows.iter_mut().zip(&weights) {
            row.push(format_number(*w));
        }
    }
    for &idx in &cfg.husimi_dump {
        let st = spec.states.get(idx).ok_or_else(|| Failure::Usage(format!("husimi_dump index {idx} beyond {} states", spec.states.len())))?;
        let path = out_path(cfg, &format!("husimi_{idx}.csv"));
        let grid = husimi_grid(st, &domain, &cfg.husimi);
        let f = std::fs::File::create(&path).map_err(|e| io_failure(&path, e))?;
        grid.write_matrix(std::io::BufWriter::new(f))?;
    }
    let csv = out_path(cfg, SPECTRUM_CSV);
    table.write(&csv).map_err(|e| io_failure(&csv, e))?;
    eprintln!("classify: wrote {} weight columns", cfg.regions.len());
    Ok(())
}

/// Classical coefficients of one region with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classical {
    pub area: f64,
    pub area_stderr: f64,
    pub area_source: String,
    pub length: f64,
    pub length_source: String,
    pub length_perpendicular: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub name: String,
    pub kind: String,
    pub method: String,
    pub complement_of: Option<String>,
    pub classical: Classical,
    pub window: (f64, f64),
    pub fit: WeylFit,
    pub tracking: Tracking,
    pub discrimination: Option<Discrimination>,
    /// Upper-half fraction with max weight above the threshold, when the
    /// region has a complement.
    pub bimodal_upper: Option<f64>,
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylSummary {
    pub domain: String,
    pub domain_area: f64,
    pub domain_perimeter: f64,
    pub seed: u64,
    pub regions: Vec<RegionResult>,
}

fn region_kind_name(r: &RegionConfig) -> String {
    match &r.kind {
        RegionKind::Analytic(n) => n.clone(),
        RegionKind::Mask { complement: false, .. } => "mask".into(),
        RegionKind::Mask { complement: true, .. } => "mask_complement".into(),
    }
}

/// Name of the configured region complementary to `r`, if any.
fn complement_of(cfg: &RunConfig, r: &RegionConfig) -> Option<String> {
    cfg.regions
        .iter()
        .find(|o| {
            o.name != r.name
                && match (&r.kind, &o.kind) {
                    (RegionKind::Analytic(a), RegionKind::Analytic(b)) => {
                        r.analytic_spec().and_then(|s| s.complement()).is_some_and(|c| c.name() == b) && a != b
                    }
                    (RegionKind::Mask { source: s1, complement: c1 }, RegionKind::Mask { source: s2, complement: c2 }) => {
                        s1 == s2 && c1 != c2
                    }
                    _ => false,
                }
        })
        .map(|o| o.name.clone())
}

const BIMODAL_THRESHOLD: f64 = 0.8;

pub fn weyl(cfg: &RunConfig) -> Outcome {
    let domain = domain(cfg)?;
    let csv = out_path(cfg, SPECTRUM_CSV);
    let table = Table::read(&csv).map_err(|e| Failure::Usage(format!("{e}; run solve and classify first")))?;
    if cfg.regions.is_empty() {
        return Err(Failure::Usage("config defines no [region NAME] sections".into()));
    }
    let missing: Vec<String> = cfg.regions.iter().filter(|r| table.column(&weight_column(r)).is_none()).map(weight_column).collect();
    if !missing.is_empty() {
        return Err(Failure::Usage(format!("spectrum.csv lacks weights {}; run classify first", missing.join(", "))));
    }
    let e_col = table.column("E").ok_or_else(|| Failure::Usage(format!("{} has no E column", csv.display())))?;
    let energies = table.numbers(e_col).map_err(Failure::Usage)?;
    let eps = default_eps(&domain);
    let mut results = Vec::new();
    let mut fit_text = String::new();
    for (i, r) in cfg.regions.iter().enumerate() {
        let weights = table.numbers(table.column(&weight_column(r)).unwrap()).map_err(Failure::Usage)?;
        let region = region_spec(cfg, &domain, r)?;
        let seed = cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
        let (area, area_stderr) = area_gamma(&domain, &region, cfg.weyl.mc_samples, seed)?;
        let length = length_gamma(&domain, &region, cfg.weyl.length_samples, eps)?;
        let length_perpendicular = if cfg.weyl.perpendicular {
            Some(length_gamma_with(&domain, &region, cfg.weyl.length_samples, eps, LaunchDirection::Perpendicular)?)
        } else {
            None
        };
        let classical = Classical {
            area,
            area_stderr,
            area_source: format!("monte carlo, {} samples, seed {seed}", cfg.weyl.mc_samples),
            length,
            length_source: if region.is_analytic() { "analytic wall scan".into() } else { format!("wall scan at offset {eps:e}") },
            length_perpendicular,
        };
        let stairs = staircase(&energies, &weights.iter().map(|w| Some(*w)).collect::<Vec<_>>(), &r.name)?;
        let window = top_window(&stairs, cfg.weyl.fit_fraction);
        let basis = match cfg.weyl.basis {
            FitBasis::FixedBeta(_) => FitBasis::FixedBeta(-length / (4.0 * PI)),
            b => b,
        };
        let fit = fit_coefficients(&stairs, window, basis)?;
        let coeffs = WeylCoefficients { area, area_stderr, length, bc_sign: -1.0 };
        let tracking = track_boundary_term(&stairs, &coeffs, window)?;
        let discrimination = length_perpendicular.map(|lp| discriminate(&stairs, &coeffs, lp, window)).transpose()?;
        let complement = complement_of(cfg, r);
        let bimodal_upper = complement.as_ref().map(|_| {
            let recs: Vec<WeightRecord> = weights
                .iter()
                .enumerate()
                .map(|(index, &w)| WeightRecord {
                    index,
                    weights: [("a".to_string(), w), ("b".to_string(), 1.0 - w)].into_iter().collect(),
                    method: r.method,
                })
                .collect();
            bimodality(&energies, &recs, BIMODAL_THRESHOLD, 5).0
        });

        let mut st = Table::new(&["E", "N", "N_mean", "delta", "theory", "theory_perpendicular"]);
        for s in residual(&stairs, &coeffs, length_perpendicular) {
            st.push(vec![
                format_number(s.energy),
                format_number(s.count),
                format_number(s.mean),
                format_number(s.delta),
                format_number(s.theory),
                s.theory_perpendicular.map_or(String::new(), format_number),
            ]);
        }
        let path = out_path(cfg, &format!("staircase_{}.csv", r.name));
        st.write(&path).map_err(|e| io_failure(&path, e))?;

        let (a_th, b_th) = (area / (4.0 * PI), -length / (4.0 * PI));
        writeln!(fit_text, "region {} ({}, {} weights)", r.name, region_kind_name(r), r.method.name()).unwrap();
        writeln!(fit_text, "  window       [{:.6}, {:.6}], {} midpoints, basis {:?}", window.0, window.1, fit.points, fit.basis).unwrap();
        writeln!(fit_text, "  alpha        {:.6} ± {:.6}   A/4pi  = {:.6}  ({:+.2}%)", fit.alpha, fit.alpha_err, a_th, 100.0 * (fit.alpha / a_th - 1.0)).unwrap();
        writeln!(fit_text, "  beta         {:.6} ± {:.6}   -L/4pi = {:.6}  ({:+.2}%)", fit.beta, fit.beta_err, b_th, 100.0 * (fit.beta / b_th - 1.0)).unwrap();
        writeln!(fit_text, "  gamma        {:.6} ± {:.6}", fit.gamma, fit.gamma_err).unwrap();
        writeln!(fit_text, "  tracking     offset {:.4}, rms {:.4} = {:.1}% of |theory| at top", tracking.offset, tracking.rms, 100.0 * tracking.relative_rms()).unwrap();
        if let Some(d) = discrimination {
            writeln!(fit_text, "  rms(delta)   parallel {:.4}, perpendicular {:.4}", d.rms_parallel, d.rms_perpendicular).unwrap();
        }
        eprintln!("weyl: region {} alpha {:+.2}% beta {:+.2}%", r.name, 100.0 * (fit.alpha / a_th - 1.0), 100.0 * (fit.beta / b_th - 1.0));
        results.push(RegionResult {
            name: r.name.clone(),
            kind: region_kind_name(r),
            method: r.method.name().into(),
            complement_of: complement,
            classical,
            window,
            fit,
            tracking,
            discrimination,
            bimodal_upper,
            states: energies.len(),
        });
    }
    let mut regions = Table::new(&["region", "area", "area_stderr", "area_source", "length", "length_source", "length_perpendicular"]);
    for r in &results {
        let c = &r.classical;
        regions.push(vec![
            r.name.clone(),
            format_number(c.area),
            format_number(c.area_stderr),
            c.area_source.replace(',', ";"),
            format_number(c.length),
            c.length_source.clone(),
            c.length_perpendicular.map_or(String::new(), format_number),
        ]);
    }
    let path = out_path(cfg, REGIONS_CSV);
    regions.write(&path).map_err(|e| io_failure(&path, e))?;
    let path = out_path(cfg, WEYL_TXT);
    std::fs::write(&path, fit_text).map_err(|e| io_failure(&path, e))?;
    let summary = WeylSummary {
        domain: domain.kind().to_string(),
        domain_area: domain.area(),
        domain_perimeter: domain.perimeter(),
        seed: cfg.seed,
        regions: results,
    };
    let path = out_path(cfg, WEYL_JSON);
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).map_err(|e| io_failure(&path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfplaneSummary {
    pub profile: DepletionProfile,
    pub q_max: f64,
    pub rms: f64,
    pub first_crossing: Option<f64>,
    pub theory_first_crossing: f64,
}

pub fn halfplane(cfg: &RunConfig) -> Outcome {
    ensure_out_dir(cfg)?;
    let h = &cfg.halfplane;
    let kappa = h.energy.sqrt();
    let q_max = h.q_max_kappa / kappa;
    let profile = depletion_profile_with(h.l_x, h.l_y, h.energy, h.half_width, &uniform_grid(q_max, h.points), h.min_modes)?;
    let mut t = Table::new(&["q_perp", "measured", "theory"]);
    for ((q, m), th) in profile.q_perp.iter().zip(&profile.measured).zip(&profile.theory) {
        t.push(vec![format_number(*q), format_number(*m), format_number(*th)]);
    }
    let path = out_path(cfg, DEPLETION_CSV);
    t.write(&path).map_err(|e| io_failure(&path, e))?;
    // 1 − J₀(2κq) first reaches 1 at the first zero of J₀.
    let theory_first_crossing = 2.404_825_557_695_773 / (2.0 * kappa);
    let summary = HalfplaneSummary { rms: profile.rms_error(q_max), first_crossing: profile.first_crossing(), q_max, theory_first_crossing, profile };
    eprintln!("halfplane: {} modes, rms {:.5}", summary.profile.modes, summary.rms);
    let path = out_path(cfg, HALFPLANE_JSON);
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).map_err(|e| io_failure(&path, e))?;
    Ok(())
}

/// Cap area reached only by orbits that never enter the stem:
/// `πR²/4 − [R² arcsin(a/R) + a√(R² − a²)]/2`.
pub fn mushroom_closed_form(r: f64, a: f64) -> f64 {
    PI * r * r / 4.0 - 0.5 * (r * r * (a / r).asin() + a * (r * r - a * a).sqrt())
}

struct Checks {
    lines: Vec<String>,
    failed: Vec<String>,
}

impl Checks {
    fn record(&mut self, name: String, pass: bool, detail: String) {
        self.lines.push(format!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
        if !pass {
            self.failed.push(name);
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<Result<T, Failure>> {
    let text = std::fs::read_to_string(path).ok()?;
    Some(serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))))
}

pub fn report(cfg: &RunConfig, check: bool) -> Outcome {
    let mut out = String::new();
    let mut checks = Checks { lines: vec![], failed: vec![] };
    let mut files = Vec::new();
    let mut any = false;

    if let Some(spec) = cfg.domain.as_ref().and_then(|_| domain(cfg).ok()).and_then(|d| cached_spectrum(cfg, &d).map(|s| (d, s))) {
        let (d, s) = spec;
        any = true;
        writeln!(out, "== spectrum").unwrap();
        writeln!(out, "domain        {} {:?}", d.kind(), d.spec().params).unwrap();
        writeln!(out, "area          {:.9}", d.area()).unwrap();
        writeln!(out, "perimeter     {:.9}", d.perimeter()).unwrap();
        writeln!(out, "levels        {} with E in [{}, {:.6}]", s.states.len(), s.e_min, s.e_max).unwrap();
        writeln!(out, "fingerprint   {}", s.fingerprint).unwrap();
        writeln!(out, "settings      {}", serde_json::to_string(&s.settings).unwrap()).unwrap();
        writeln!(out, "settings hash {}", s.settings_hash()).unwrap();
        let worst = s.states.iter().map(|x| x.sigma_min).fold(0.0, f64::max);
        writeln!(out, "max sigma_min {worst:e}").unwrap();
        let flagged = s.audit.as_ref().map_or(0, |a| a.flagged().len());
        writeln!(out, "audit         {} windows, {} flagged, {} rescans", s.audit.as_ref().map_or(0, |a| a.windows.len()), flagged, s.audit.as_ref().map_or(0, |a| a.rescans)).unwrap();
        for w in &s.warnings {
            writeln!(out, "warning       {w}").unwrap();
        }
        checks.record("solver audit".into(), flagged == 0, format!("{flagged} flagged windows"));
        files.push((SPECTRUM_CACHE.to_string(), "spectrum cache: header, then one eigenstate per line"));
        files.push((SPECTRUM_CSV.to_string(), "index, E, kappa, sigma_min, multiplicity, then w_<region>:<method> weights"));
    }

    if let Some(summary) = read_json::<WeylSummary>(&out_path(cfg, WEYL_JSON)) {
        let summary = summary?;
        any = true;
        writeln!(out, "\n== classical coefficients").unwrap();
        writeln!(out, "{:<16} {:>12} {:>10} {:>12} {:>12}  provenance", "region", "A", "stderr", "L", "L_perp").unwrap();
        for r in &summary.regions {
            let c = &r.classical;
            writeln!(
                out,
                "{:<16} {:>12.6} {:>10.6} {:>12.6} {:>12}  A: {}; L: {}",
                r.name,
                c.area,
                c.area_stderr,
                c.length,
                c.length_perpendicular.map_or("-".into(), |x| format!("{x:.6}")),
                c.area_source,
                c.length_source
            )
            .unwrap();
        }
        writeln!(out, "\n== sum rules").unwrap();
        for r in &summary.regions {
            let Some(other) = r.complement_of.as_ref().and_then(|n| summary.regions.iter().find(|o| &o.name == n)) else { continue };
            if r.name > other.name {
                continue;
            }
            let (a, b) = (&r.classical, &other.classical);
            let sigma = a.area_stderr.hypot(b.area_stderr);
            let gap = a.area + b.area - summary.domain_area;
            let k = cfg.check.sum_rule_sigmas;
            writeln!(out, "{} + {}: A sum {:.6} vs {:.6} ({:+.2} sigma)", r.name, other.name, a.area + b.area, summary.domain_area, gap / sigma).unwrap();
            checks.record(format!("area sum {}+{}", r.name, other.name), gap.abs() <= k * sigma, format!("{:+.2} sigma (bound {k})", gap / sigma));
            let lgap = a.length + b.length - summary.domain_perimeter;
            writeln!(out, "{} + {}: L sum {:.9} vs {:.9}", r.name, other.name, a.length + b.length, summary.domain_perimeter).unwrap();
            checks.record(format!("length sum {}+{}", r.name, other.name), lgap.abs() <= 1e-9 * summary.domain_perimeter, format!("gap {lgap:e}"));
        }
        if let Some(d) = cfg.domain.as_ref().filter(|d| d.kind == DomainKind::Mushroom) {
            let (rr, a) = (d.params["R"], d.params["a"]);
            let closed = mushroom_closed_form(rr, a);
            writeln!(out, "\n== mushroom closed form").unwrap();
            writeln!(out, "piR^2/4 - [R^2 asin(a/R) + a sqrt(R^2-a^2)]/2 = {closed:.6}").unwrap();
            let mut matched = Vec::new();
            for r in summary.regions.iter().filter(|r| r.kind.starts_with("mushroom")) {
                let z = (r.classical.area - closed) / r.classical.area_stderr;
                writeln!(out, "  vs {} ({}) A = {:.6}: {:+.2} sigma", r.name, r.kind, r.classical.area, z).unwrap();
                if z.abs() <= 3.0 {
                    matched.push(r.kind.clone());
                }
            }
            let verdict = match matched.as_slice() {
                [one] => format!("the closed form is the {one} area"),
                [] => "the closed form matches no configured region".into(),
                _ => "the closed form matches several regions".into(),
            };
            writeln!(out, "  labelling: {verdict}").unwrap();
            checks.record("mushroom closed form".into(), matched.len() == 1, verdict);
        }
        writeln!(out, "\n== partial Weyl fits").unwrap();
        for r in &summary.regions {
            let (a_th, b_th) = (r.classical.area / (4.0 * PI), -r.classical.length / (4.0 * PI));
            let (da, db) = (r.fit.alpha / a_th - 1.0, r.fit.beta / b_th - 1.0);
            writeln!(out, "{} ({}, {} weights, {} states)", r.name, r.kind, r.method, r.states).unwrap();
            writeln!(out, "  window [{:.4}, {:.4}] basis {:?}", r.window.0, r.window.1, r.fit.basis).unwrap();
            writeln!(out, "  alpha {:.6} vs A/4pi {:.6} ({:+.2}%)", r.fit.alpha, a_th, 100.0 * da).unwrap();
            writeln!(out, "  beta  {:.6} vs -L/4pi {:.6} ({:+.2}%)", r.fit.beta, b_th, 100.0 * db).unwrap();
            writeln!(out, "  gamma {:.6}", r.fit.gamma).unwrap();
            writeln!(out, "  delta - offset vs boundary term: rms {:.4} ({:.1}% of {:.4})", r.tracking.rms, 100.0 * r.tracking.relative_rms(), r.tracking.term_at_top).unwrap();
            if let Some(tol) = cfg.check.alpha_tol {
                checks.record(format!("alpha {}", r.name), da.abs() <= tol, format!("{:+.2}% (bound {:.1}%)", 100.0 * da, 100.0 * tol));
            }
            if let Some(tol) = cfg.check.beta_tol {
                checks.record(format!("beta {}", r.name), db.abs() <= tol, format!("{:+.2}% (bound {:.1}%)", 100.0 * db, 100.0 * tol));
            }
            if let Some(tol) = cfg.check.track_tol {
                let rel = r.tracking.relative_rms();
                checks.record(format!("boundary tracking {}", r.name), rel < tol, format!("{:.1}% (bound {:.1}%)", 100.0 * rel, 100.0 * tol));
            }
            if let Some(d) = r.discrimination {
                writeln!(out, "  rms(delta - theory): parallel {:.4}, perpendicular {:.4}", d.rms_parallel, d.rms_perpendicular).unwrap();
                if cfg.check.discrimination {
                    checks.record(format!("parallel beats perpendicular {}", r.name), d.prefers_parallel(), format!("{:.4} vs {:.4}", d.rms_parallel, d.rms_perpendicular));
                }
            }
            if let Some(b) = r.bimodal_upper {
                writeln!(out, "  upper-half states with max weight > {BIMODAL_THRESHOLD}: {:.1}%", 100.0 * b).unwrap();
                if let Some(f) = cfg.check.bimodal_fraction {
                    checks.record(format!("bimodality {}", r.name), b >= f, format!("{:.1}% (need {:.1}%)", 100.0 * b, 100.0 * f));
                }
            }
            files.push((format!("staircase_{}.csv", r.name), "E, N, N_mean, delta, theory, theory_perpendicular at staircase midpoints"));
        }
        files.push((REGIONS_CSV.to_string(), "A and L of each region with provenance"));
        files.push((WEYL_TXT.to_string(), "fit report"));
        files.push((WEYL_JSON.to_string(), "machine-readable fits and coefficients"));
    }

    if let Some(h) = read_json::<HalfplaneSummary>(&out_path(cfg, HALFPLANE_JSON)) {
        let h = h?;
        any = true;
        let p = &h.profile;
        writeln!(out, "\n== wall depletion").unwrap();
        writeln!(out, "E = {} ± {}, kappa = {:.4}, {} modes", p.energy, p.half_width, p.kappa, p.modes).unwrap();
        writeln!(out, "rms(measured - (1 - J0(2 kappa q))) on (0, {:.5}] = {:.5}", h.q_max, h.rms).unwrap();
        writeln!(out, "first crossing of 1: measured {:?}, theory {:.5}", h.first_crossing, h.theory_first_crossing).unwrap();
        if let Some(tol) = cfg.check.halfplane_rms {
            checks.record("wall depletion".into(), h.rms < tol, format!("rms {:.5} (bound {tol})", h.rms));
        }
        files.push((DEPLETION_CSV.to_string(), "q_perp, measured, theory"));
        files.push((HALFPLANE_JSON.to_string(), "depletion profile and summary"));
    }
    if !any {
        return Err(Failure::Usage(format!("nothing to report in '{}'; run solve, weyl or halfplane first", cfg.out_dir.display())));
    }
    for r in &cfg.regions {
        if matches!(r.kind, RegionKind::Mask { source: MaskSource::Island { .. }, .. }) {
            files.push((format!("mask_{}.txt", r.name), "generated island mask"));
        }
    }
    for &i in &cfg.husimi_dump {
        files.push((format!("husimi_{i}.csv"), "Husimi matrix, one row per s"));
    }
    writeln!(out, "\n== checks").unwrap();
    for l in &checks.lines {
        writeln!(out, "{l}").unwrap();
    }
    writeln!(out, "\n== files").unwrap();
    files.push((REPORT_TXT.to_string(), "this report"));
    for (f, what) in &files {
        writeln!(out, "{f:<24} {what}").unwrap();
    }
    ensure_out_dir(cfg)?;
    let path = out_path(cfg, REPORT_TXT);
    std::fs::write(&path, &out).map_err(|e| io_failure(&path, e))?;
    print!("{out}");
    if check && !checks.failed.is_empty() {
        return Err(Failure::Check(checks.failed));
    }
    Ok(())
}
