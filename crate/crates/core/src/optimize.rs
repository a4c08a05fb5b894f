//! Gradient ascent on the discrete domain-of-attraction volume and projected
//! gradient descent on the mean termination time over a region of interest.

use std::time::Instant;

use log::warn;

use crate::error::{Error, Result};
use crate::field::ParamField;
use crate::generator::{assemble_with_gradient, Generator, GeneratorBundle, QuadratureRule};
use crate::grid::{CellSet, Grid};
use crate::sens::{doa_evaluation, time_evaluation};
use crate::solve::{AbsorptionProblem, CellField, DEFAULT_SURE_EPSILON};
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    MaximizeDoa,
    MinimizeTime,
}

/// How the generator at `b` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Assemble the generator of `v(.; b)` at every iterate.
    Standard,
    /// Combine `2r + 1` precomputed generators conically.
    Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// Step `k` uses entry `min(k, len - 1)`.
    List(Vec<f64>),
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::List(v) => v[k.min(v.len() - 1)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptConfig {
    pub alpha: f64,
    pub steps: StepSchedule,
    pub tol: f64,
    pub max_iters: usize,
    pub mode: Mode,
    pub path: Discretization,
    pub quadrature: QuadratureRule,
    /// Halve the step until the objective improves (at most 20 times).
    pub backtracking: bool,
    /// `p >= 1 - sure_epsilon` counts as certain absorption.
    pub sure_epsilon: f64,
    /// Relative slack for the initial coverage requirement of time minimization.
    pub coverage_epsilon: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            steps: StepSchedule::Constant(3.0),
            tol: 1e-6,
            max_iters: 15,
            mode: Mode::MaximizeDoa,
            path: Discretization::Standard,
            quadrature: QuadratureRule::default(),
            backtracking: false,
            sure_epsilon: DEFAULT_SURE_EPSILON,
            coverage_epsilon: 1e-3,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGrid(m.to_string()));
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        match &self.steps {
            StepSchedule::Constant(g) if !(*g > 0.0) => return bad("step size must be positive"),
            StepSchedule::List(v) if v.is_empty() || v.iter().any(|g| !(*g > 0.0)) => {
                return bad("step sizes must be positive")
            }
            _ => {}
        }
        Ok(())
    }
}

/// One iterate of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient: Vec<f64>,
    /// `|Df(b_k)|`.
    pub grad_norm: f64,
    /// `|db_k|`, the search direction after any projection.
    pub step_norm: f64,
    /// Coverage `g(b_k)`, time mode only.
    pub coverage: Option<f64>,
    pub coverage_gradient: Option<Vec<f64>>,
    /// Search direction actually used (before scaling by the step size).
    pub direction: Vec<f64>,
    pub projected: bool,
    /// Some affine-path derivative fell back to the one-sided convention.
    pub deadband: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptTrace {
    pub records: Vec<IterationRecord>,
}

impl OptTrace {
    pub fn first(&self) -> Option<&IterationRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `k,b_1,...,b_r,f,grad_norm,g,projected,deadband,seconds`.
    /// `grad_norm` is the norm of the search direction after projection.
    pub fn to_csv(&self) -> String {
        let r = self.records.first().map_or(0, |rec| rec.params.len());
        let mut s = String::from("k");
        for l in 1..=r {
            s.push_str(&format!(",b_{l}"));
        }
        s.push_str(",f,grad_norm,g,projected,deadband,seconds\n");
        for rec in &self.records {
            s.push_str(&rec.k.to_string());
            for b in &rec.params {
                s.push_str(&format!(",{b}"));
            }
            let g = rec.coverage.map_or(String::new(), |g| g.to_string());
            s.push_str(&format!(
                ",{},{},{},{},{},{}\n",
                rec.objective,
                rec.step_norm,
                g,
                rec.projected as u8,
                rec.deadband as u8,
                rec.seconds
            ));
        }
        s
    }
}

#[derive(Debug)]
pub enum StopReason {
    Converged,
    MaxIters,
    Failed(Error),
}

#[derive(Debug)]
pub struct OptOutcome {
    pub params: Vec<f64>,
    pub trace: OptTrace,
    pub stop: StopReason,
    /// Full generator assemblies performed (directional derivatives excluded).
    pub assemblies: usize,
    pub probabilities: Option<CellField>,
    pub times: Option<CellField>,
}

/// Produces generators and their parameter derivatives along one
/// discretization path.
struct GeneratorSource<'a> {
    grid: &'a Grid,
    field: &'a dyn ParamField,
    quad: &'a QuadratureRule,
    bundle: Option<GeneratorBundle>,
    assemblies: usize,
}

impl<'a> GeneratorSource<'a> {
    fn new(
        grid: &'a Grid,
        field: &'a dyn ParamField,
        quad: &'a QuadratureRule,
        path: Discretization,
    ) -> Result<Self> {
        let mut src = Self {
            grid,
            field,
            quad,
            bundle: None,
            assemblies: 0,
        };
        if path == Discretization::Affine {
            let bundle = GeneratorBundle::assemble(grid, field, quad)?;
            src.assemblies += 2 * field.n_params() + 1;
            src.bundle = Some(bundle);
        }
        Ok(src)
    }

    fn at(&mut self, b: &[f64]) -> Result<(Generator, Vec<CscMatrix>, bool)> {
        match &self.bundle {
            Some(bundle) => {
                let g = bundle.combine(b);
                let mut deadband = false;
                let partials = (0..b.len())
                    .map(|l| {
                        let (m, flag) = bundle.combine_directional(b, l);
                        deadband |= flag;
                        m
                    })
                    .collect();
                Ok((g, partials, deadband))
            }
            None => {
                let (g, partials) = assemble_with_gradient(self.grid, self.field, b, self.quad)?;
                self.assemblies += 1;
                Ok((g, partials, false))
            }
        }
    }
}

struct Evaluation {
    objective: f64,
    gradient: Vec<f64>,
    coverage: Option<(f64, Vec<f64>)>,
    probabilities: CellField,
    times: Option<CellField>,
    deadband: bool,
}

struct Problem<'a> {
    grid: &'a Grid,
    target: &'a CellSet,
    region: Option<&'a CellSet>,
    mode: Mode,
    alpha: f64,
}

impl Problem<'_> {
    fn evaluate(&self, src: &mut GeneratorSource, b: &[f64]) -> Result<Evaluation> {
        let (generator, partials, deadband) = src.at(b)?;
        let problem = AbsorptionProblem::new(generator, self.target.clone())?;
        let vol = self.grid.cell_volume();
        match self.mode {
            Mode::MaximizeDoa => {
                let e = doa_evaluation(&problem, &partials, vol, self.region, b, self.alpha)?;
                Ok(Evaluation {
                    objective: e.objective,
                    gradient: e.gradient,
                    coverage: None,
                    probabilities: e.probabilities,
                    times: None,
                    deadband,
                })
            }
            Mode::MinimizeTime => {
                let region = self.region.expect("time mode needs a region");
                let e = time_evaluation(&problem, &partials, vol, region, b, self.alpha)?;
                Ok(Evaluation {
                    objective: e.objective,
                    gradient: e.gradient,
                    coverage: Some((e.coverage, e.coverage_gradient)),
                    probabilities: e.probabilities,
                    times: Some(e.times),
                    deadband,
                })
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Remove the component of `step` along `normal` when it points against
/// `normal`; returns whether the projection fired.
pub fn project_onto_halfspace(step: &mut [f64], normal: &[f64]) -> bool {
    let nn = dot(normal, normal);
    let sn = dot(step, normal);
    if sn < 0.0 && nn > 0.0 {
        let c = sn / nn;
        step.iter_mut().zip(normal).for_each(|(s, n)| *s -= c * n);
        true
    } else {
        false
    }
}

fn run(
    problem: Problem,
    field: &dyn ParamField,
    cfg: &OptConfig,
    b0: &[f64],
) -> Result<OptOutcome> {
    cfg.validate()?;
    if b0.len() != field.n_params() {
        return Err(Error::DimensionMismatch {
            expected: field.n_params(),
            got: b0.len(),
        });
    }
    let start = Instant::now();
    let mut src = GeneratorSource::new(problem.grid, field, &cfg.quadrature, cfg.path)?;
    let mut trace = OptTrace::default();
    let mut b = b0.to_vec();
    let mut current = problem.evaluate(&mut src, &b)?;
    check_start(&problem, cfg, &current)?;
    let ascent = problem.mode == Mode::MaximizeDoa;
    let stop = loop {
        let k = trace.len();
        let mut direction: Vec<f64> = current
            .gradient
            .iter()
            .map(|g| if ascent { *g } else { -g })
            .collect();
        let projected = match &current.coverage {
            Some((_, dg)) => project_onto_halfspace(&mut direction, dg),
            None => false,
        };
        let step_norm = norm(&direction);
        trace.records.push(IterationRecord {
            k,
            params: b.clone(),
            objective: current.objective,
            gradient: current.gradient.clone(),
            grad_norm: norm(&current.gradient),
            step_norm,
            coverage: current.coverage.as_ref().map(|c| c.0),
            coverage_gradient: current.coverage.as_ref().map(|c| c.1.clone()),
            direction: direction.clone(),
            projected,
            deadband: current.deadband,
            seconds: start.elapsed().as_secs_f64(),
        });
        if step_norm < cfg.tol {
            break StopReason::Converged;
        }
        if k == cfg.max_iters {
            break StopReason::MaxIters;
        }
        let mut gamma = cfg.steps.at(k);
        let mut halvings = 0;
        let next = loop {
            let trial: Vec<f64> = b
                .iter()
                .zip(&direction)
                .map(|(bi, d)| bi + gamma * d)
                .collect();
            match problem.evaluate(&mut src, &trial) {
                Ok(e) => {
                    let better = if ascent {
                        e.objective > current.objective
                    } else {
                        e.objective < current.objective
                    };
                    if !cfg.backtracking || better || halvings == 20 {
                        break Ok((trial, e));
                    }
                }
                Err(e) if !cfg.backtracking || halvings == 20 => break Err(e),
                Err(_) => {}
            }
            gamma *= 0.5;
            halvings += 1;
        };
        match next {
            Ok((trial, e)) => {
                b = trial;
                current = e;
            }
            Err(e) => break StopReason::Failed(e),
        }
    };
    Ok(OptOutcome {
        params: b,
        trace,
        stop,
        assemblies: src.assemblies,
        probabilities: Some(current.probabilities),
        times: current.times,
    })
}

fn check_start(problem: &Problem, cfg: &OptConfig, e: &Evaluation) -> Result<()> {
    match problem.mode {
        Mode::MaximizeDoa => {
            let mask = problem.target.mask(e.probabilities.len());
            let grows = e
                .probabilities
                .values
                .iter()
                .enumerate()
                .any(|(i, p)| !mask[i] && *p >= 1.0 - cfg.sure_epsilon);
            if !grows {
                warn!("no non-target cell is absorbed with certainty at the initial parameters");
            }
            Ok(())
        }
        Mode::MinimizeTime => {
            let region = problem.region.expect("time mode needs a region");
            let (g, _) = e.coverage.as_ref().expect("time mode computes coverage");
            let required =
                (1.0 - cfg.coverage_epsilon) * region.len() as f64 * problem.grid.cell_volume();
            if *g < required {
                return Err(Error::ConstraintViolated { g: *g, required });
            }
            Ok(())
        }
    }
}

/// Gradient ascent on `sum_i m_i p_i(b) - alpha |b|^2`. With `region`, only
/// the covered volume of that region counts.
pub fn maximize_doa(
    grid: &Grid,
    field: &dyn ParamField,
    target: &CellSet,
    region: Option<&CellSet>,
    cfg: &OptConfig,
    b0: &[f64],
) -> Result<OptOutcome> {
    let problem = Problem {
        grid,
        target,
        region,
        mode: Mode::MaximizeDoa,
        alpha: cfg.alpha,
    };
    run(problem, field, cfg, b0)
}

/// Projected gradient descent on `sum_{D0} m_i t_i(b) + alpha |b|^2`,
/// keeping the coverage of `region` non-decreasing to first order.
pub fn minimize_time(
    grid: &Grid,
    field: &dyn ParamField,
    target: &CellSet,
    region: &CellSet,
    cfg: &OptConfig,
    b0: &[f64],
) -> Result<OptOutcome> {
    let problem = Problem {
        grid,
        target,
        region: Some(region),
        mode: Mode::MinimizeTime,
        alpha: cfg.alpha,
    };
    run(problem, field, cfg, b0)
}

/// Run the configured mode along the affine discretization path.
pub fn run_affine(
    grid: &Grid,
    field: &dyn ParamField,
    target: &CellSet,
    region: Option<&CellSet>,
    cfg: &OptConfig,
    b0: &[f64],
) -> Result<OptOutcome> {
    if field.affine().is_none() {
        return Err(Error::NotAffine);
    }
    let cfg = OptConfig {
        path: Discretization::Affine,
        ..cfg.clone()
    };
    match cfg.mode {
        Mode::MaximizeDoa => maximize_doa(grid, field, target, region, &cfg, b0),
        Mode::MinimizeTime => minimize_time(
            grid,
            field,
            target,
            region.ok_or(Error::EmptyTarget)?,
            &cfg,
            b0,
        ),
    }
}

/// Dispatch on `cfg.mode` and `cfg.path`.
pub fn optimize(
    grid: &Grid,
    field: &dyn ParamField,
    target: &CellSet,
    region: Option<&CellSet>,
    cfg: &OptConfig,
    b0: &[f64],
) -> Result<OptOutcome> {
    match (cfg.path, cfg.mode) {
        (Discretization::Affine, _) => run_affine(grid, field, target, region, cfg, b0),
        (Discretization::Standard, Mode::MaximizeDoa) => {
            maximize_doa(grid, field, target, region, cfg, b0)
        }
        (Discretization::Standard, Mode::MinimizeTime) => minimize_time(
            grid,
            field,
            target,
            region.ok_or(Error::EmptyTarget)?,
            cfg,
            b0,
        ),
    }
}
