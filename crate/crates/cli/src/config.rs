//! Line-based `key = value` configuration with `[section]` headers.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use billiard_core::classical::{Birkhoff, RegionSpec};
use billiard_core::classify::{HusimiSettings, Method, ProjectionSettings};
use billiard_core::geometry::{DomainKind, DomainSpec};
use billiard_core::solver::SolverSettings;
use billiard_core::weyl::FitBasis;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// One `key = value` line with its source line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

/// Sections in file order. Keys before the first header live in a section
/// named `""`.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, String> {
    let mut sections = vec![Section { name: String::new(), line: 0, entries: vec![] }];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| format!("line {line}: unterminated section header '{body}'"))?
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            if name.is_empty() {
                return Err(format!("line {line}: empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(format!("line {line}: duplicate section [{name}]"));
            }
            sections.push(Section { name, line, entries: vec![] });
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| format!("line {line}: expected 'key = value', got '{body}'"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(format!("line {line}: missing key"));
        }
        let sec = sections.last_mut().expect("root section");
        if sec.get(key).is_some() {
            return Err(format!("line {line}: duplicate key '{key}' in [{}]", sec.name));
        }
        sec.entries.push(Entry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok(sections)
}

/// Which levels to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelRequest {
    First(usize),
    Range { e_min: f64, e_max: f64 },
}

/// Source of a mask region.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    File(PathBuf),
    Island { orbit: Birkhoff, centers: Vec<Birkhoff>, iterations: usize, grid: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionKind {
    /// Closed-form classifier, by its core name.
    Analytic(String),
    Mask { source: MaskSource, complement: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub name: String,
    pub kind: RegionKind,
    pub method: Method,
}

impl RegionConfig {
    pub fn analytic_spec(&self) -> Option<RegionSpec> {
        match &self.kind {
            RegionKind::Analytic(n) => analytic_region(n),
            RegionKind::Mask { .. } => None,
        }
    }
}

fn analytic_region(name: &str) -> Option<RegionSpec> {
    Some(match name {
        "full" => RegionSpec::Full,
        "mushroom_regular" => RegionSpec::MushroomRegular,
        "mushroom_chaotic" => RegionSpec::MushroomChaotic,
        "ellipse_rotating" => RegionSpec::EllipseRotating,
        "ellipse_oscillating" => RegionSpec::EllipseOscillating,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylConfig {
    /// Fit over the top `fit_fraction` of the energy range.
    pub fit_fraction: f64,
    pub basis: FitBasis,
    pub mc_samples: usize,
    pub length_samples: usize,
    /// Also compare against the perpendicular-launch boundary length.
    pub perpendicular: bool,
}

impl Default for WeylConfig {
    fn default() -> Self {
        WeylConfig { fit_fraction: 0.8, basis: FitBasis::Full, mc_samples: 4_000_000, length_samples: 4000, perpendicular: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfplaneConfig {
    pub l_x: f64,
    pub l_y: f64,
    pub energy: f64,
    pub half_width: f64,
    /// Largest wall distance in units of `1/κ`.
    pub q_max_kappa: f64,
    pub points: usize,
    pub min_modes: usize,
}

impl Default for HalfplaneConfig {
    fn default() -> Self {
        HalfplaneConfig {
            l_x: 1.0,
            l_y: std::f64::consts::SQRT_2,
            energy: 4000.0,
            half_width: 400.0,
            q_max_kappa: 3.0,
            points: 60,
            min_modes: billiard_core::halfplane::MIN_WINDOW_MODES,
        }
    }
}

/// Tolerances evaluated by `report --check`; unset checks are skipped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckConfig {
    pub alpha_tol: Option<f64>,
    pub beta_tol: Option<f64>,
    /// Bound on the offset-corrected RMS of `Δ_Γ` relative to the boundary term.
    pub track_tol: Option<f64>,
    pub bimodal_threshold: Option<f64>,
    pub bimodal_fraction: Option<f64>,
    pub halfplane_rms: Option<f64>,
    /// Parallel boundary length must beat the perpendicular one.
    pub discrimination: bool,
    pub sum_rule_sigmas: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Option<DomainSpec>,
    pub levels: Option<LevelRequest>,
    pub solver: SolverSettings,
    pub regions: Vec<RegionConfig>,
    pub husimi: HusimiSettings,
    pub projection: ProjectionSettings,
    /// States whose Husimi grids `classify` writes out.
    pub husimi_dump: Vec<usize>,
    pub weyl: WeylConfig,
    pub halfplane: HalfplaneConfig,
    pub check: CheckConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, String> {
    e.value.parse().map_err(|_| format!("line {}: cannot parse '{}' for '{}'", e.line, e.value, e.key))
}

fn parse_bool(e: &Entry) -> Result<bool, String> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("line {}: '{}' must be true or false", e.line, e.key)),
    }
}

fn parse_point(e: &Entry) -> Result<Birkhoff, String> {
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [s, p] => match (s.parse(), p.parse()) {
            (Ok(s), Ok(p)) => Ok(Birkhoff { s, p }),
            _ => Err(format!("line {}: '{}' must be 's, p'", e.line, e.key)),
        },
        _ => Err(format!("line {}: '{}' must be 's, p'", e.line, e.key)),
    }
}

/// Applies `key = value` overrides to a serde struct, keeping each field's
/// numeric type.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, section: &Section) -> Result<T, String> {
    let mut value = serde_json::to_value(base).expect("settings serialize");
    let map = value.as_object_mut().expect("settings are a struct");
    for e in &section.entries {
        let slot = map
            .get_mut(&e.key)
            .ok_or_else(|| format!("line {}: unknown key '{}' in [{}]", e.line, e.key, section.name))?;
        *slot = if slot.is_u64() {
            serde_json::Value::from(parse_value::<u64>(e)?)
        } else {
            let x: f64 = parse_value(e)?;
            serde_json::Value::from(x)
        };
    }
    serde_json::from_value(value).map_err(|err| format!("[{}]: {err}", section.name))
}

fn check_keys(section: &Section, allowed: &[&str]) -> Result<(), String> {
    match section.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
        Some(e) => Err(format!("line {}: unknown key '{}' in [{}]", e.line, e.key, section.name)),
        None => Ok(()),
    }
}

fn default_method(kind: &RegionKind) -> Method {
    match kind {
        RegionKind::Analytic(n) if n.starts_with("mushroom") => Method::Projection,
        RegionKind::Analytic(n) if n.starts_with("ellipse") => Method::Separatrix,
        _ => Method::Husimi,
    }
}

fn parse_region(name: &str, sec: &Section, base: &Path) -> Result<RegionConfig, String> {
    check_keys(sec, &["kind", "method", "mask", "complement", "seed", "center", "iterations", "grid_s", "grid_p"])?;
    let kind_entry = sec.get("kind").ok_or_else(|| format!("line {}: [{}] needs 'kind'", sec.line, sec.name))?;
    let kind = if kind_entry.value == "mask" {
        let complement = sec.get("complement").map(parse_bool).transpose()?.unwrap_or(false);
        let source = match (sec.get("mask"), sec.get("seed")) {
            (Some(p), None) => {
                let path = base.join(&p.value);
                if !path.is_file() {
                    return Err(format!("line {}: mask file '{}' does not exist", p.line, path.display()));
                }
                MaskSource::File(path)
            }
            (None, Some(seed)) => MaskSource::Island {
                orbit: parse_point(seed)?,
                centers: sec.get("center").map(parse_point).transpose()?.into_iter().collect(),
                iterations: sec.get("iterations").map(parse_value).transpose()?.unwrap_or(20_000),
                grid: (
                    sec.get("grid_s").map(parse_value).transpose()?.unwrap_or(200),
                    sec.get("grid_p").map(parse_value).transpose()?.unwrap_or(200),
                ),
            },
            _ => return Err(format!("line {}: mask region '{name}' needs exactly one of 'mask' or 'seed'", sec.line)),
        };
        RegionKind::Mask { source, complement }
    } else if analytic_region(&kind_entry.value).is_some() {
        RegionKind::Analytic(kind_entry.value.clone())
    } else {
        return Err(format!("line {}: unknown region kind '{}'", kind_entry.line, kind_entry.value));
    };
    let method = match sec.get("method") {
        Some(m) => m.value.parse().map_err(|e| format!("line {}: {e}", m.line))?,
        None => default_method(&kind),
    };
    Ok(RegionConfig { name: name.to_string(), kind, method })
}

impl RunConfig {
    /// Parses `text`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, String> {
        let sections = parse_sections(text)?;
        let mut cfg = RunConfig {
            domain: None,
            levels: None,
            solver: SolverSettings::default(),
            regions: vec![],
            husimi: HusimiSettings::default(),
            projection: ProjectionSettings::default(),
            husimi_dump: vec![],
            weyl: WeylConfig::default(),
            halfplane: HalfplaneConfig::default(),
            check: CheckConfig { sum_rule_sigmas: 3.0, ..CheckConfig::default() },
            seed: 1,
            out_dir: base.join("out"),
        };
        let mut names = BTreeSet::new();
        for sec in &sections {
            let head: Vec<&str> = sec.name.splitn(2, ' ').collect();
            match head.as_slice() {
                [""] => {
                    if let Some(e) = sec.entries.first() {
                        return Err(format!("line {}: key '{}' outside any section", e.line, e.key));
                    }
                }
                ["run"] => {
                    check_keys(sec, &["seed", "out_dir"])?;
                    if let Some(e) = sec.get("seed") {
                        cfg.seed = parse_value(e)?;
                    }
                    if let Some(e) = sec.get("out_dir") {
                        cfg.out_dir = base.join(&e.value);
                    }
                }
                ["domain"] => {
                    let kind_entry = sec.get("kind").ok_or_else(|| format!("line {}: [domain] needs 'kind'", sec.line))?;
                    let kind = DomainKind::from_str(&kind_entry.value).map_err(|e| format!("line {}: {e}", kind_entry.line))?;
                    let mut params = Vec::new();
                    for e in sec.entries.iter().filter(|e| e.key != "kind") {
                        params.push((e.key.clone(), parse_value::<f64>(e)?));
                    }
                    let spec = DomainSpec { kind, params: params.into_iter().collect() };
                    spec.validate().map_err(|e| format!("[domain]: {e}"))?;
                    cfg.domain = Some(spec);
                }
                ["spectrum"] => {
                    check_keys(sec, &["levels", "e_min", "e_max"])?;
                    cfg.levels = Some(match (sec.get("levels"), sec.get("e_min"), sec.get("e_max")) {
                        (Some(n), None, None) => {
                            let n: usize = parse_value(n)?;
                            if n == 0 {
                                return Err(format!("line {}: levels must be positive", sec.line));
                            }
                            LevelRequest::First(n)
                        }
                        (None, lo, Some(hi)) => {
                            let e_min = lo.map(parse_value).transpose()?.unwrap_or(0.0);
                            let e_max: f64 = parse_value(hi)?;
                            if !(e_min >= 0.0 && e_max > e_min) {
                                return Err(format!("line {}: energy range [{e_min}, {e_max}] must be positive and nonempty", sec.line));
                            }
                            LevelRequest::Range { e_min, e_max }
                        }
                        _ => return Err(format!("line {}: [spectrum] needs either 'levels' or 'e_max'", sec.line)),
                    });
                }
                ["solver"] => cfg.solver = overlay(&cfg.solver, sec)?,
                ["classify"] => {
                    let mut husimi = Section { entries: vec![], ..sec.clone() };
                    let mut projection = Section { entries: vec![], ..sec.clone() };
                    for e in &sec.entries {
                        if let Some(k) = e.key.strip_prefix("husimi_") {
                            if k == "dump" {
                                cfg.husimi_dump = e
                                    .value
                                    .split(',')
                                    .map(|x| x.trim().parse().map_err(|_| format!("line {}: bad state index '{x}'", e.line)))
                                    .collect::<Result<_, _>>()?;
                            } else {
                                husimi.entries.push(Entry { key: k.to_string(), ..e.clone() });
                            }
                        } else {
                            projection.entries.push(e.clone());
                        }
                    }
                    cfg.husimi = overlay(&cfg.husimi, &husimi)?;
                    cfg.projection = overlay(&cfg.projection, &projection)?;
                }
                ["weyl"] => {
                    check_keys(sec, &["fit_fraction", "basis", "mc_samples", "length_samples", "perpendicular"])?;
                    let w = &mut cfg.weyl;
                    if let Some(e) = sec.get("fit_fraction") {
                        w.fit_fraction = parse_value(e)?;
                        if !(w.fit_fraction > 0.0 && w.fit_fraction <= 1.0) {
                            return Err(format!("line {}: fit_fraction must lie in (0, 1]", e.line));
                        }
                    }
                    if let Some(e) = sec.get("basis") {
                        w.basis = match e.value.as_str() {
                            "full" => FitBasis::Full,
                            "no_offset" => FitBasis::NoOffset,
                            "fixed_beta" => FitBasis::FixedBeta(f64::NAN),
                            _ => return Err(format!("line {}: basis must be full, no_offset or fixed_beta", e.line)),
                        };
                    }
                    if let Some(e) = sec.get("mc_samples") {
                        w.mc_samples = parse_value(e)?;
                    }
                    if let Some(e) = sec.get("length_samples") {
                        w.length_samples = parse_value(e)?;
                    }
                    if let Some(e) = sec.get("perpendicular") {
                        w.perpendicular = parse_bool(e)?;
                    }
                }
                ["halfplane"] => {
                    check_keys(sec, &["L_x", "L_y", "energy", "half_width", "q_max_kappa", "points", "min_modes"])?;
                    let h = &mut cfg.halfplane;
                    for e in &sec.entries {
                        match e.key.as_str() {
                            "L_x" => h.l_x = parse_value(e)?,
                            "L_y" => h.l_y = parse_value(e)?,
                            "energy" => h.energy = parse_value(e)?,
                            "half_width" => h.half_width = parse_value(e)?,
                            "q_max_kappa" => h.q_max_kappa = parse_value(e)?,
                            "points" => h.points = parse_value(e)?,
                            _ => h.min_modes = parse_value(e)?,
                        }
                    }
                    if !(h.energy > 0.0 && h.half_width > 0.0 && h.points > 0) {
                        return Err(format!("line {}: [halfplane] needs positive energy, half_width and points", sec.line));
                    }
                }
                ["check"] => {
                    check_keys(
                        sec,
                        &["alpha_tol", "beta_tol", "track_tol", "bimodal_threshold", "bimodal_fraction", "halfplane_rms", "discrimination", "sum_rule_sigmas"],
                    )?;
                    let c = &mut cfg.check;
                    for e in &sec.entries {
                        match e.key.as_str() {
                            "alpha_tol" => c.alpha_tol = Some(parse_value(e)?),
                            "beta_tol" => c.beta_tol = Some(parse_value(e)?),
                            "track_tol" => c.track_tol = Some(parse_value(e)?),
                            "bimodal_threshold" => c.bimodal_threshold = Some(parse_value(e)?),
                            "bimodal_fraction" => c.bimodal_fraction = Some(parse_value(e)?),
                            "halfplane_rms" => c.halfplane_rms = Some(parse_value(e)?),
                            "discrimination" => c.discrimination = parse_bool(e)?,
                            _ => c.sum_rule_sigmas = parse_value(e)?,
                        }
                    }
                }
                ["region", name] => {
                    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                        return Err(format!("line {}: region name '{name}' may only use letters, digits, '_' and '-'", sec.line));
                    }
                    if !names.insert(name.to_string()) {
                        return Err(format!("line {}: duplicate region '{name}'", sec.line));
                    }
                    cfg.regions.push(parse_region(name, sec, base)?);
                }
                _ => return Err(format!("line {}: unknown section [{}]", sec.line, sec.name)),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MUSHROOM: &str = "
# desk-scale mushroom
[run]
seed = 7

[domain]
kind = mushroom
R = 1
l = 1
a = 0.5

[spectrum]
levels = 400

[solver]
points_per_wavelength = 12
extra_functions = 25

[region regular]
kind = mushroom_regular

[region chaotic]
kind = mushroom_chaotic
method = projection

[weyl]
basis = no_offset
perpendicular = true
";

    #[test]
    fn mushroom_config_parses() {
        let c = RunConfig::parse(MUSHROOM, Path::new("/tmp")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.levels, Some(LevelRequest::First(400)));
        assert_eq!(c.domain.unwrap().kind, DomainKind::Mushroom);
        assert_eq!(c.solver.points_per_wavelength, 12.0);
        assert_eq!(c.solver.extra_functions, 25);
        assert_eq!(c.regions.len(), 2);
        assert_eq!(c.regions[0].method, Method::Projection);
        assert_eq!(c.weyl.basis, FitBasis::NoOffset);
        assert!(c.weyl.perpendicular);
        assert_eq!(c.out_dir, Path::new("/tmp/out"));
    }

    #[test]
    fn errors_name_the_line() {
        let bad = "[domain]\nkind = mushroom\nR = 1\nl = 1\na = 0.5\n[solver]\nnot_a_key = 3\n";
        let e = RunConfig::parse(bad, Path::new(".")).unwrap_err();
        assert!(e.contains("line 7") && e.contains("not_a_key"), "{e}");
        let e = RunConfig::parse("[region a]\nkind = full\n[region a]\nkind = full\n", Path::new(".")).unwrap_err();
        assert!(e.contains("duplicate"), "{e}");
        let e = RunConfig::parse("[solver]\nextra_functions = 2.5\n", Path::new(".")).unwrap_err();
        assert!(e.contains("line 2"), "{e}");
        let e = RunConfig::parse("[spectrum]\ne_min = 10\ne_max = 5\n", Path::new(".")).unwrap_err();
        assert!(e.contains("energy range"), "{e}");
    }

    #[test]
    fn missing_mask_file_is_rejected() {
        let e = RunConfig::parse("[region m]\nkind = mask\nmask = nowhere.mask\n", Path::new("/nonexistent")).unwrap_err();
        assert!(e.contains("does not exist"), "{e}");
    }

    #[test]
    fn island_seed_parses() {
        let c = RunConfig::parse("[region island]\nkind = mask\nseed = 0.24, 0\ncenter = 0.005, 0\n", Path::new(".")).unwrap();
        match &c.regions[0].kind {
            RegionKind::Mask { source: MaskSource::Island { orbit, centers, .. }, complement: false } => {
                assert_eq!((orbit.s, orbit.p), (0.24, 0.0));
                assert_eq!(centers.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.regions[0].method, Method::Husimi);
    }
}
