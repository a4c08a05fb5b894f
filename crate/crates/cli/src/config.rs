//! Run configuration: one TOML file with a section per pipeline stage.

use std::path::PathBuf;

use doaopt::field::{benchmark, ConstantField, LinearFocus, ParamField};
use doaopt::generator::QuadratureRule;
use doaopt::grid::{AxisBox, CellLabel, CellSet, Grid, Region, SelectRule};
use doaopt::optimize::{Discretization, Mode, OptConfig, StepSchedule};
use doaopt::oracle::{OracleTarget, SimConfig};
use doaopt::solve::{DEFAULT_CONDITION_FLOOR, DEFAULT_SURE_EPSILON};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub field: FieldSection,
    pub target: RegionSection,
    pub d0: Option<RegionSection>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// `systemE`, `systemEmod`, `constant` or `focus`.
    pub name: String,
    /// Initial parameter matrix, one row per entry.
    #[serde(default)]
    pub b0: Vec<Vec<f64>>,
    /// Componentwise control bound for `systemE`; `inf` disables it.
    #[serde(default = "default_saturation")]
    pub saturation: f64,
    pub velocity: Option<Vec<f64>>,
    pub decay: Option<f64>,
    pub rotation: Option<f64>,
}

fn default_saturation() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Ball,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Contained,
    CenterIn,
    Intersects,
}

impl From<RuleName> for SelectRule {
    fn from(r: RuleName) -> Self {
        match r {
            RuleName::Contained => SelectRule::Contained,
            RuleName::CenterIn => SelectRule::CenterIn,
            RuleName::Intersects => SelectRule::Intersects,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub shape: Shape,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub rule: Option<RuleName>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    MaximizeDoa,
    MinimizeTime,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum PathName {
    Standard,
    Affine,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Constant(f64),
    List(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub mode: ModeName,
    pub alpha: f64,
    pub gamma: Gamma,
    pub tol: f64,
    pub max_iters: i64,
    pub path: PathName,
    pub backtracking: bool,
    pub sure_epsilon: f64,
    pub coverage_epsilon: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            mode: ModeName::MaximizeDoa,
            alpha: 0.02,
            gamma: Gamma::Constant(3.0),
            tol: 1e-6,
            max_iters: 15,
            path: PathName::Standard,
            backtracking: false,
            sure_epsilon: DEFAULT_SURE_EPSILON,
            coverage_epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub order: i64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self { order: 2 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Only `band-lu` is available.
    pub kind: String,
    pub condition_floor: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            kind: "band-lu".into(),
            condition_floor: DEFAULT_CONDITION_FLOOR,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub h: f64,
    pub t_max: f64,
    pub samples_per_axis: i64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            h: 1e-3,
            t_max: 100.0,
            samples_per_axis: 1,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Parsed configuration plus the raw text it came from.
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
    pub hash: String,
}

pub fn hash_text(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

pub fn parse(text: &str) -> Result<Loaded, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        match line {
            Some(l) => ConfigError(format!("config line {l}: {}", e.message())),
            None => ConfigError(format!("config: {}", e.message())),
        }
    })?;
    Ok(Loaded {
        config,
        text: text.to_string(),
        hash: hash_text(text),
    })
}

/// 1-based line of `key` inside `[section]`, or of the section header
/// when the key is absent.
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
        } else if current == section {
            let k = t.split('=').next().unwrap_or("").trim();
            if k == key {
                return Some(i + 1);
            }
        }
    }
    header
}

/// Everything the commands need, checked against each other.
pub struct Setup {
    pub grid: Grid,
    pub field: Box<dyn ParamField>,
    pub b0: Vec<f64>,
    pub target: CellSet,
    pub d0: Option<CellSet>,
    pub opt: OptConfig,
    pub sim: SimConfig,
    pub condition_floor: f64,
    pub out_dir: Option<PathBuf>,
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn err(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> ConfigError {
        match line_of(self.text, section, key) {
            Some(l) => ConfigError(format!("config line {l}: {section}.{key}: {msg}")),
            None => ConfigError(format!("config: {section}.{key}: {msg}")),
        }
    }
}

fn region_from(
    c: &Checker,
    section: &str,
    r: &RegionSection,
    d: usize,
) -> Result<Region, ConfigError> {
    match r.shape {
        Shape::Box => {
            let lo =
                r.lo.clone()
                    .ok_or_else(|| c.err(section, "lo", "required for a box"))?;
            let hi =
                r.hi.clone()
                    .ok_or_else(|| c.err(section, "hi", "required for a box"))?;
            if lo.len() != d || hi.len() != d {
                return Err(c.err(section, "lo", format!("box corners need {d} coordinates")));
            }
            AxisBox::new(lo, hi)
                .map(Region::Box)
                .map_err(|e| c.err(section, "lo", e))
        }
        Shape::Ball => {
            let center = r
                .center
                .clone()
                .ok_or_else(|| c.err(section, "center", "required for a ball"))?;
            let radius = r
                .radius
                .ok_or_else(|| c.err(section, "radius", "required for a ball"))?;
            if center.len() != d {
                return Err(c.err(section, "center", format!("needs {d} coordinates")));
            }
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(c.err(section, "radius", "must be positive"));
            }
            Ok(Region::Ball { center, radius })
        }
    }
}

fn overlaps(region: &Region, domain: &AxisBox) -> bool {
    match region {
        Region::Box(b) => {
            (0..domain.dim()).all(|k| b.lo()[k] < domain.hi()[k] && b.hi()[k] > domain.lo()[k])
        }
        Region::Ball { center, radius } => {
            let d2: f64 = (0..domain.dim())
                .map(|k| {
                    let c = center[k].clamp(domain.lo()[k], domain.hi()[k]);
                    (c - center[k]).powi(2)
                })
                .sum();
            d2 < radius * radius
        }
    }
}

impl Loaded {
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let c = Checker { text: &self.text };
        let cfg = &self.config;

        let dom = &cfg.domain;
        let d = dom.resolution.len();
        if d == 0 {
            return Err(c.err("domain", "resolution", "needs at least one axis"));
        }
        if let Some(r) = dom.resolution.iter().find(|&&r| r <= 0) {
            return Err(c.err(
                "domain",
                "resolution",
                format!("entries must be positive, got {r}"),
            ));
        }
        if dom.lo.len() != d || dom.hi.len() != d {
            return Err(c.err(
                "domain",
                "lo",
                format!("lo and hi need {d} coordinates to match the resolution"),
            ));
        }
        let bounds =
            AxisBox::new(dom.lo.clone(), dom.hi.clone()).map_err(|e| c.err("domain", "lo", e))?;
        let res = dom.resolution.iter().map(|&r| r as usize).collect();
        let grid = Grid::new(bounds.clone(), res).map_err(|e| c.err("domain", "resolution", e))?;

        let f = &cfg.field;
        let field: Box<dyn ParamField> = match f.name.as_str() {
            "systemE" | "systemEmod" => {
                if !(f.saturation > 0.0) {
                    return Err(c.err("field", "saturation", "must be positive (inf disables it)"));
                }
                let sat = f.saturation.is_finite().then_some(f.saturation);
                benchmark(&f.name, sat).expect("known benchmark")
            }
            "constant" => {
                let v = f
                    .velocity
                    .clone()
                    .ok_or_else(|| c.err("field", "velocity", "required for a constant field"))?;
                Box::new(ConstantField { velocity: v })
            }
            "focus" => Box::new(LinearFocus {
                decay: f
                    .decay
                    .ok_or_else(|| c.err("field", "decay", "required for a focus field"))?,
                rotation: f.rotation.unwrap_or(0.0),
            }),
            other => {
                return Err(c.err(
                    "field",
                    "name",
                    format!(
                        "unknown field '{other}' (expected systemE, systemEmod, constant or focus)"
                    ),
                ))
            }
        };
        if field.dim() != d {
            return Err(c.err(
                "field",
                "name",
                format!(
                    "field is {}-dimensional but the domain has {d} axes",
                    field.dim()
                ),
            ));
        }
        let b0: Vec<f64> = f.b0.iter().flatten().copied().collect();
        if b0.len() != field.n_params() {
            return Err(c.err(
                "field",
                "b0",
                format!("expected {} parameters, got {}", field.n_params(), b0.len()),
            ));
        }
        if f.b0.iter().any(|row| row.len() != f.b0[0].len()) {
            return Err(c.err("field", "b0", "rows must have equal length"));
        }

        let target_region = region_from(&c, "target", &cfg.target, d)?;
        if !overlaps(&target_region, &bounds) {
            return Err(c.err("target", "shape", "region does not intersect the domain"));
        }
        let rule = cfg.target.rule.unwrap_or(RuleName::CenterIn).into();
        let target = grid
            .select_labeled(&target_region, rule, CellLabel::Target)
            .map_err(|e| c.err("target", "shape", e))?;
        if target.is_empty() {
            return Err(c.err("target", "rule", "selects no cells on this grid"));
        }

        let d0 = match &cfg.d0 {
            Some(r) => {
                let region = region_from(&c, "d0", r, d)?;
                if !overlaps(&region, &bounds) {
                    return Err(c.err("d0", "shape", "region does not intersect the domain"));
                }
                let rule = r.rule.unwrap_or(RuleName::Intersects).into();
                let cells = grid
                    .select_labeled(&region, rule, CellLabel::D0)
                    .map_err(|e| c.err("d0", "shape", e))?;
                if cells.is_empty() {
                    return Err(c.err("d0", "rule", "selects no cells on this grid"));
                }
                Some(cells)
            }
            None => None,
        };

        let o = &cfg.optimizer;
        if o.mode == ModeName::MinimizeTime && d0.is_none() {
            return Err(c.err("optimizer", "mode", "minimize_time needs a [d0] section"));
        }
        if o.max_iters < 0 {
            return Err(c.err("optimizer", "max_iters", "must be non-negative"));
        }
        let q = &cfg.quadrature;
        if q.order < 1 {
            return Err(c.err("quadrature", "order", "must be at least 1"));
        }
        let quadrature = QuadratureRule::gauss_legendre(q.order as usize)
            .map_err(|e| c.err("quadrature", "order", e))?;
        let steps = match &o.gamma {
            Gamma::Constant(g) => StepSchedule::Constant(*g),
            Gamma::List(v) if v.is_empty() => {
                return Err(c.err("optimizer", "gamma", "list must not be empty"))
            }
            Gamma::List(v) => StepSchedule::List(v.clone()),
        };
        let opt = OptConfig {
            alpha: o.alpha,
            steps,
            tol: o.tol,
            max_iters: o.max_iters as usize,
            mode: match o.mode {
                ModeName::MaximizeDoa => Mode::MaximizeDoa,
                ModeName::MinimizeTime => Mode::MinimizeTime,
            },
            path: match o.path {
                PathName::Standard => Discretization::Standard,
                PathName::Affine => Discretization::Affine,
            },
            quadrature,
            backtracking: o.backtracking,
            sure_epsilon: o.sure_epsilon,
            coverage_epsilon: o.coverage_epsilon,
        };
        opt.validate().map_err(|e| c.err("optimizer", "alpha", e))?;
        if opt.path == Discretization::Affine && field.affine().is_none() {
            return Err(c.err(
                "optimizer",
                "path",
                format!("field '{}' has no affine decomposition", f.name),
            ));
        }

        if cfg.solver.kind != "band-lu" {
            return Err(c.err(
                "solver",
                "kind",
                format!("unknown solver '{}' (only band-lu)", cfg.solver.kind),
            ));
        }
        if !(cfg.solver.condition_floor > 0.0) {
            return Err(c.err("solver", "condition_floor", "must be positive"));
        }

        let or = &cfg.oracle;
        if or.samples_per_axis < 1 {
            return Err(c.err("oracle", "samples_per_axis", "must be at least 1"));
        }
        let mut sim = SimConfig::new(OracleTarget::Region(target_region), bounds);
        sim.h = or.h;
        sim.t_max = or.t_max;
        sim.samples_per_axis = or.samples_per_axis as usize;
        sim.validate().map_err(|e| c.err("oracle", "h", e))?;

        Ok(Setup {
            grid,
            field,
            b0,
            target,
            d0,
            opt,
            sim,
            condition_floor: cfg.solver.condition_floor,
            out_dir: cfg.output.dir.clone(),
        })
    }

    /// Number of columns used when printing a parameter vector as a matrix.
    pub fn param_columns(&self) -> usize {
        self.config.field.b0.first().map_or(1, |r| r.len().max(1))
    }
}
