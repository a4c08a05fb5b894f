//! Ground truth by direct trajectory simulation: fixed-step RK4 from cell
//! centers until the trajectory enters the target, leaves the domain, or
//! runs out of time.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldAt, ParamField, VectorField};
use crate::grid::{AxisBox, CellSet, Grid, Region};
use crate::solve::{CellField, FieldTag};

/// What counts as "in the target" during simulation.
#[derive(Debug, Clone)]
pub enum OracleTarget {
    Region(Region),
    /// Union of grid cells.
    Cells {
        grid: Grid,
        cells: CellSet,
    },
}

impl OracleTarget {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            OracleTarget::Region(r) => r.contains(x),
            OracleTarget::Cells { grid, cells } => {
                grid.locate(x).is_some_and(|c| cells.contains(c))
            }
        }
    }
}

/// Cubic Hermite interpolant of one RK4 step, from `x0` with slope `f0`
/// to `x1` with slope `f1`, at fraction `s`.
struct StepCurve<'a> {
    x0: &'a [f64],
    f0: &'a [f64],
    x1: &'a [f64],
    f1: &'a [f64],
    h: f64,
}

impl StepCurve<'_> {
    fn at(&self, s: f64, out: &mut [f64]) {
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for k in 0..out.len() {
            out[k] = h00 * self.x0[k]
                + h10 * self.h * self.f0[k]
                + h01 * self.x1[k]
                + h11 * self.h * self.f1[k];
        }
    }

    /// First fraction in `(0, 1]` at which `inside` holds, if any. The step
    /// is scanned at a few interior points and the first hit is refined by
    /// bisection.
    fn first_hit(&self, inside: impl Fn(&[f64]) -> bool) -> Option<f64> {
        const SCAN: usize = 8;
        let mut x = vec![0.0; self.x0.len()];
        let mut hit = None;
        for i in 1..=SCAN {
            let s = i as f64 / SCAN as f64;
            self.at(s, &mut x);
            if inside(&x) {
                hit = Some(s);
                break;
            }
        }
        let mut hi = hit?;
        let mut lo = hi - 1.0 / SCAN as f64;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            self.at(mid, &mut x);
            if inside(&x) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub h: f64,
    pub t_max: f64,
    pub target: OracleTarget,
    pub domain: AxisBox,
    /// Samples per axis inside each cell; 1 uses the center only.
    pub samples_per_axis: usize,
}

impl SimConfig {
    /// Defaults: `h = 1e-3`, `t_max = 100`, one sample per cell.
    pub fn new(target: OracleTarget, domain: AxisBox) -> Self {
        Self {
            h: 1e-3,
            t_max: 100.0,
            target,
            domain,
            samples_per_axis: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) || !(self.t_max > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "oracle step {} and horizon {} must be positive",
                self.h, self.t_max
            )));
        }
        if self.samples_per_axis == 0 {
            return Err(Error::InvalidGrid(
                "oracle needs at least one sample per axis".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Absorbed {
        time: f64,
    },
    /// Left the domain, or the state became non-finite.
    Escaped {
        non_finite: bool,
    },
    Timeout,
}

impl Outcome {
    pub fn time(&self) -> f64 {
        match self {
            Outcome::Absorbed { time } => *time,
            _ => f64::INFINITY,
        }
    }

    pub fn absorbed(&self) -> bool {
        matches!(self, Outcome::Absorbed { .. })
    }
}

/// One classical RK4 step; `k[0]` must hold `f(x)` on entry.
fn rk4_step(
    field: &dyn VectorField,
    x: &[f64],
    h: f64,
    k: &mut [Vec<f64>; 4],
    tmp: &mut [f64],
    out: &mut [f64],
) {
    let d = x.len();
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * h * k[0][i];
    }
    field.eval(tmp, &mut k[1]);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * h * k[1][i];
    }
    field.eval(tmp, &mut k[2]);
    for i in 0..d {
        tmp[i] = x[i] + h * k[2][i];
    }
    field.eval(tmp, &mut k[3]);
    for i in 0..d {
        out[i] = x[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// Follow the flow of `field` from `x0`. Target entry and domain exit are
/// located on the cubic Hermite interpolant of each step, so crossing
/// times carry the integrator's fourth-order accuracy.
pub fn simulate(field: &dyn VectorField, x0: &[f64], cfg: &SimConfig) -> Result<Outcome> {
    cfg.validate()?;
    let d = field.dim();
    if x0.len() != d || cfg.domain.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if !cfg.domain.contains(x0) {
        return Err(Error::InvalidGrid(format!(
            "start point {x0:?} lies outside the domain"
        )));
    }
    if cfg.target.contains(x0) {
        return Ok(Outcome::Absorbed { time: 0.0 });
    }
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut f_next = vec![0.0; d];
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    field.eval(&x, &mut k[0]);
    let steps = (cfg.t_max / cfg.h).ceil() as usize;
    for step in 0..steps {
        rk4_step(field, &x, cfg.h, &mut k, &mut tmp, &mut next);
        field.eval(&next, &mut f_next);
        if next.iter().chain(&f_next).any(|v| !v.is_finite()) {
            return Ok(Outcome::Escaped { non_finite: true });
        }
        let curve = StepCurve {
            x0: &x,
            f0: &k[0],
            x1: &next,
            f1: &f_next,
            h: cfg.h,
        };
        let entry = curve.first_hit(|y| cfg.target.contains(y));
        let exit = curve.first_hit(|y| !cfg.domain.contains(y));
        let t0 = step as f64 * cfg.h;
        match (entry, exit) {
            (Some(s), Some(e)) if s <= e => {
                return Ok(Outcome::Absorbed {
                    time: t0 + s * cfg.h,
                })
            }
            (Some(s), None) => {
                return Ok(Outcome::Absorbed {
                    time: t0 + s * cfg.h,
                })
            }
            (_, Some(_)) => return Ok(Outcome::Escaped { non_finite: false }),
            (None, None) => {}
        }
        std::mem::swap(&mut x, &mut next);
        std::mem::swap(&mut k[0], &mut f_next);
    }
    Ok(Outcome::Timeout)
}

/// Simulate the parametrized field at `b` from `x0`.
pub fn simulate_cell(
    pf: &dyn ParamField,
    b: &[f64],
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<Outcome> {
    if b.len() != pf.n_params() {
        return Err(Error::DimensionMismatch {
            expected: pf.n_params(),
            got: b.len(),
        });
    }
    simulate(
        &FieldAt {
            field: pf,
            params: b,
        },
        x0,
        cfg,
    )
}

/// Per-cell simulation results with aggregated flags.
#[derive(Debug, Clone)]
pub struct OracleFields {
    /// Fraction of samples absorbed (0 or 1 with one sample per cell).
    pub indicator: CellField,
    /// Mean absorption time over the samples, `+inf` unless all are absorbed.
    pub time: CellField,
    pub timeouts: usize,
    pub non_finite: usize,
}

fn sample_points(grid: &Grid, cell: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let bx = grid.cell_box(cell);
    let d = grid.dim();
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut s| {
            let mut x = vec![0.0; d];
            for k in (0..d).rev() {
                let i = s % per_axis;
                s /= per_axis;
                x[k] = bx.lo()[k] + (i as f64 + 0.5) / per_axis as f64 * (bx.hi()[k] - bx.lo()[k]);
            }
            x
        })
        .collect()
}

pub fn oracle_fields(
    grid: &Grid,
    pf: &dyn ParamField,
    b: &[f64],
    cfg: &SimConfig,
) -> Result<OracleFields> {
    cfg.validate()?;
    if pf.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: pf.dim(),
        });
    }
    if b.len() != pf.n_params() {
        return Err(Error::DimensionMismatch {
            expected: pf.n_params(),
            got: b.len(),
        });
    }
    let field = FieldAt {
        field: pf,
        params: b,
    };
    let outcomes: Vec<Vec<Outcome>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|c| {
            sample_points(grid, c, cfg.samples_per_axis)
                .iter()
                .map(|x| simulate(&field, x, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut indicator = Vec::with_capacity(outcomes.len());
    let mut time = Vec::with_capacity(outcomes.len());
    let (mut timeouts, mut non_finite) = (0, 0);
    for samples in &outcomes {
        let hits = samples.iter().filter(|o| o.absorbed()).count();
        indicator.push(hits as f64 / samples.len() as f64);
        time.push(samples.iter().map(Outcome::time).sum::<f64>() / samples.len() as f64);
        for o in samples {
            match o {
                Outcome::Timeout => timeouts += 1,
                Outcome::Escaped { non_finite: true } => non_finite += 1,
                _ => {}
            }
        }
    }
    Ok(OracleFields {
        indicator: CellField::new(FieldTag::Indicator, indicator),
        time: CellField::new(FieldTag::Time, time),
        timeouts,
        non_finite,
    })
}
