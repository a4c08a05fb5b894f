//! Derivatives of absorption probabilities and termination times with
//! respect to the generator, and the resulting objective gradients.
//!
//! Restricted to the free (non-target) cells, `p^ = -G^^{-T} q` and
//! `t^ = -G^^{-T} e`. For a perturbation `dG` the right-hand sides combine
//! into full-length column products, `-(dG^T p)` and `-(dG^T t)`, because
//! `p = 1` and `t = 0` on the target. Objective gradients need a single
//! adjoint solve `G^ w = m^` per objective, followed by one sparse
//! product per parameter.

use crate::band::BandLu;
use crate::error::{Error, Result};
use crate::field::ParamField;
use crate::generator::{assemble_with_gradient, QuadratureRule};
use crate::grid::{CellSet, Grid};
use crate::solve::{
    clip_probabilities, probabilities_restricted, times_restricted, AbsorptionProblem, CellField,
    FieldTag,
};
use crate::sparse::CscMatrix;

/// Factorization of `G^` together with the solutions it produced.
pub struct AdjointWorkspace<'a> {
    problem: &'a AbsorptionProblem,
    lu: Option<BandLu>,
    /// Unclipped `p`, with `1` on the target.
    p_full: Vec<f64>,
    /// `t`, with `0` on the target.
    t_full: Vec<f64>,
}

impl<'a> AdjointWorkspace<'a> {
    pub fn new(problem: &'a AbsorptionProblem) -> Result<Self> {
        if problem.free_cells().is_empty() {
            return Ok(Self {
                problem,
                lu: None,
                p_full: vec![1.0; problem.n()],
                t_full: vec![0.0; problem.n()],
            });
        }
        let lu = problem.factor()?;
        let p = probabilities_restricted(problem, &lu)?;
        let t = times_restricted(problem, &lu)?;
        Ok(Self {
            problem,
            p_full: problem.expand(&p, 1.0),
            t_full: problem.expand(&t, 0.0),
            lu: Some(lu),
        })
    }

    pub fn problem(&self) -> &AbsorptionProblem {
        self.problem
    }

    pub fn probabilities(&self) -> CellField {
        CellField::new(FieldTag::Probability, clip_probabilities(&self.p_full))
    }

    pub fn times(&self) -> CellField {
        CellField::new(
            FieldTag::Time,
            self.t_full.iter().map(|t| t.max(0.0)).collect(),
        )
    }

    /// Restricted `p^` before clipping.
    pub fn raw_probabilities(&self) -> Vec<f64> {
        self.problem.restrict(&self.p_full)
    }

    pub fn raw_times(&self) -> Vec<f64> {
        self.problem.restrict(&self.t_full)
    }

    fn check(&self, delta: &CscMatrix) -> Result<()> {
        let n = self.problem.n();
        if delta.n_rows() != n || delta.n_cols() != n {
            return Err(Error::StaleWorkspace);
        }
        Ok(())
    }

    /// `rhs_i = -(dG^T x)_i` over the free cells.
    fn perturbed_rhs(&self, delta: &CscMatrix, x_full: &[f64]) -> Vec<f64> {
        self.problem
            .free_cells()
            .iter()
            .map(|&i| -delta.col_dot(i, x_full))
            .collect()
    }

    fn solve_transpose(&self, mut rhs: Vec<f64>) -> Vec<f64> {
        if let Some(lu) = &self.lu {
            lu.solve_transpose(&mut rhs);
        }
        rhs
    }

    /// Solve `G^ w = mass` for restricted `mass`.
    pub fn adjoint(&self, mut mass: Vec<f64>) -> Vec<f64> {
        if let Some(lu) = &self.lu {
            lu.solve(&mut mass);
        }
        mass
    }

    /// Directional derivative of `p^` in the direction `delta`.
    pub fn dp_direction(&self, delta: &CscMatrix) -> Result<Vec<f64>> {
        self.check(delta)?;
        Ok(self.solve_transpose(self.perturbed_rhs(delta, &self.p_full)))
    }

    /// Directional derivative of `t^` in the direction `delta`.
    pub fn dt_direction(&self, delta: &CscMatrix) -> Result<Vec<f64>> {
        self.check(delta)?;
        Ok(self.solve_transpose(self.perturbed_rhs(delta, &self.t_full)))
    }

    /// `w . (-(dG^T x))` for an adjoint vector `w`.
    fn adjoint_product(&self, w: &[f64], delta: &CscMatrix, x_full: &[f64]) -> Result<f64> {
        self.check(delta)?;
        Ok(self
            .problem
            .free_cells()
            .iter()
            .zip(w)
            .map(|(&i, wi)| -wi * delta.col_dot(i, x_full))
            .sum())
    }

    /// `m^ . Dp^(G) dG` computed through an adjoint vector.
    pub fn dp_functional(&self, w: &[f64], delta: &CscMatrix) -> Result<f64> {
        self.adjoint_product(w, delta, &self.p_full)
    }

    pub fn dt_functional(&self, w: &[f64], delta: &CscMatrix) -> Result<f64> {
        self.adjoint_product(w, delta, &self.t_full)
    }

    fn restricted_mass(&self, cell_volume: f64, region: Option<&CellSet>) -> Vec<f64> {
        let mask = region.map(|r| r.mask(self.problem.n()));
        self.problem
            .free_cells()
            .iter()
            .map(|&i| match &mask {
                Some(m) if !m[i] => 0.0,
                _ => cell_volume,
            })
            .collect()
    }
}

fn sq_norm(b: &[f64]) -> f64 {
    b.iter().map(|v| v * v).sum()
}

/// Value and gradient of `sum_i m_i p_i - alpha |b|^2`.
#[derive(Debug, Clone)]
pub struct DoaEvaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub probabilities: CellField,
}

/// Value and gradient of `sum_{D0} m_i t_i + alpha |b|^2`, with the
/// coverage `g = sum_{D0} m_i p_i` and its gradient.
#[derive(Debug, Clone)]
pub struct TimeEvaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub coverage: f64,
    pub coverage_gradient: Vec<f64>,
    pub probabilities: CellField,
    pub times: CellField,
}

/// DOA objective from a problem and the generator derivatives `dG/db_l`.
///
/// With `region` set, only cells of that region carry mass, which turns the
/// objective into the covered volume of the region.
pub fn doa_evaluation(
    problem: &AbsorptionProblem,
    partials: &[CscMatrix],
    cell_volume: f64,
    region: Option<&CellSet>,
    b: &[f64],
    alpha: f64,
) -> Result<DoaEvaluation> {
    let ws = AdjointWorkspace::new(problem)?;
    let w = ws.adjoint(ws.restricted_mass(cell_volume, region));
    let gradient = partials
        .iter()
        .zip(b)
        .map(|(dg, bl)| Ok(ws.dp_functional(&w, dg)? - 2.0 * alpha * bl))
        .collect::<Result<Vec<_>>>()?;
    let probabilities = ws.probabilities();
    let objective = probabilities.integrate(cell_volume, region) - alpha * sq_norm(b);
    Ok(DoaEvaluation {
        objective,
        gradient,
        probabilities,
    })
}

/// Time objective and coverage constraint with their gradients.
pub fn time_evaluation(
    problem: &AbsorptionProblem,
    partials: &[CscMatrix],
    cell_volume: f64,
    region: &CellSet,
    b: &[f64],
    alpha: f64,
) -> Result<TimeEvaluation> {
    let ws = AdjointWorkspace::new(problem)?;
    let w = ws.adjoint(ws.restricted_mass(cell_volume, Some(region)));
    let mut gradient = Vec::with_capacity(b.len());
    let mut coverage_gradient = Vec::with_capacity(b.len());
    for (dg, bl) in partials.iter().zip(b) {
        gradient.push(ws.dt_functional(&w, dg)? + 2.0 * alpha * bl);
        coverage_gradient.push(ws.dp_functional(&w, dg)?);
    }
    let probabilities = ws.probabilities();
    let times = ws.times();
    Ok(TimeEvaluation {
        objective: times.integrate(cell_volume, Some(region)) + alpha * sq_norm(b),
        gradient,
        coverage: probabilities.integrate(cell_volume, Some(region)),
        coverage_gradient,
        probabilities,
        times,
    })
}

/// Gradient of `f(b) = sum_i m_i p_i(b) - alpha |b|^2` through the standard
/// discretization.
pub fn grad_doa_objective(
    grid: &Grid,
    pf: &dyn ParamField,
    b: &[f64],
    target: &CellSet,
    alpha: f64,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let (generator, partials) = assemble_with_gradient(grid, pf, b, quad)?;
    let problem = AbsorptionProblem::new(generator, target.clone())?;
    Ok(doa_evaluation(&problem, &partials, grid.cell_volume(), None, b, alpha)?.gradient)
}

/// Gradients of the time objective and of the coverage constraint.
pub fn grad_time_objective(
    grid: &Grid,
    pf: &dyn ParamField,
    b: &[f64],
    target: &CellSet,
    region: &CellSet,
    alpha: f64,
    quad: &QuadratureRule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (generator, partials) = assemble_with_gradient(grid, pf, b, quad)?;
    let problem = AbsorptionProblem::new(generator, target.clone())?;
    let e = time_evaluation(&problem, &partials, grid.cell_volume(), region, b, alpha)?;
    Ok((e.gradient, e.coverage_gradient))
}
