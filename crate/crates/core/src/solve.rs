//! Absorption quantities of a leaky Markov jump process.
//!
//! With `T` the absorbing target and `G^` the generator restricted to the
//! remaining cells, every quantity here is the solution of a linear system
//! in `G^^T` (or a shifted variant). Values on target cells are fixed by
//! definition and never enter the solve.

use log::warn;

use crate::band::BandLu;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::grid::CellSet;
use crate::sparse::CscMatrix;

/// Default probability gap below which `a` is set to infinity.
pub const DEFAULT_SURE_EPSILON: f64 = 1e-6;
/// Default lower bound on `p` for the conditioned-time support.
pub const DEFAULT_CONDITION_FLOOR: f64 = 1e-12;

const RESIDUAL_FACTOR: f64 = 1e-10;
const CLIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldTag {
    Probability,
    Time,
    Kruzkov,
    CondTime,
    Indicator,
}

impl FieldTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldTag::Probability => "PROBABILITY",
            FieldTag::Time => "TIME",
            FieldTag::Kruzkov => "KRUZKOV",
            FieldTag::CondTime => "CONDTIME",
            FieldTag::Indicator => "INDICATOR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PROBABILITY" => FieldTag::Probability,
            "TIME" => FieldTag::Time,
            "KRUZKOV" => FieldTag::Kruzkov,
            "CONDTIME" => FieldTag::CondTime,
            "INDICATOR" => FieldTag::Indicator,
            _ => return None,
        })
    }
}

/// One value per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub tag: FieldTag,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn new(tag: FieldTag, values: Vec<f64>) -> Self {
        Self { tag, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sum_i volume * values[i]` over the given cells (all cells if `None`).
    pub fn integrate(&self, cell_volume: f64, cells: Option<&CellSet>) -> f64 {
        match cells {
            Some(set) => set.cells().iter().map(|&i| self.values[i]).sum::<f64>() * cell_volume,
            None => self.values.iter().sum::<f64>() * cell_volume,
        }
    }

    /// `-log(h)`: the absorption-time surrogate of a Kruzkov field.
    pub fn neg_log(&self) -> Vec<f64> {
        self.values.iter().map(|h| -h.ln()).collect()
    }
}

/// Generator together with an absorbing target set.
#[derive(Debug, Clone)]
pub struct AbsorptionProblem {
    generator: Generator,
    target: CellSet,
    /// Non-target cells in increasing order.
    free: Vec<usize>,
    /// `position[i]` is the restricted index of cell `i`, or `usize::MAX` on `T`.
    position: Vec<usize>,
    restricted: CscMatrix,
    /// `q_i = sum_{j in T} G_ji` for free `i`.
    inflow: Vec<f64>,
}

impl AbsorptionProblem {
    pub fn new(generator: Generator, target: CellSet) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::EmptyTarget);
        }
        let n = generator.n();
        if target.cells().last().is_some_and(|&c| c >= n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: target.cells()[target.len() - 1] + 1,
            });
        }
        let mask = target.mask(n);
        let free: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        let mut position = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            position[i] = k;
        }
        let restricted = generator.rates().principal_submatrix(&free);
        let inflow = free
            .iter()
            .map(|&i| {
                let (rows, vals) = generator.rates().col(i);
                rows.iter()
                    .zip(vals)
                    .filter(|(&r, _)| mask[r])
                    .map(|(_, v)| v)
                    .sum()
            })
            .collect();
        Ok(Self {
            generator,
            target,
            free,
            position,
            restricted,
            inflow,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn target(&self) -> &CellSet {
        &self.target
    }

    pub fn n(&self) -> usize {
        self.generator.n()
    }

    pub fn free_cells(&self) -> &[usize] {
        &self.free
    }

    /// Restricted index of a cell, `None` on the target.
    pub fn restricted_index(&self, cell: usize) -> Option<usize> {
        let k = self.position[cell];
        (k != usize::MAX).then_some(k)
    }

    pub fn restricted_matrix(&self) -> &CscMatrix {
        &self.restricted
    }

    pub fn inflow(&self) -> &[f64] {
        &self.inflow
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::factor(&self.restricted)
    }

    /// Scatter a restricted vector into a full field with `on_target` on `T`.
    pub fn expand(&self, restricted: &[f64], on_target: f64) -> Vec<f64> {
        let mut full = vec![on_target; self.n()];
        for (&i, &v) in self.free.iter().zip(restricted) {
            full[i] = v;
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max_i |(A^T x - b)_i|`.
fn transpose_residual(a: &CscMatrix, x: &[f64], b: &[f64]) -> f64 {
    (0..a.n_cols())
        .map(|i| (a.col_dot(i, x) - b[i]).abs())
        .fold(0.0, f64::max)
}

/// Restricted absorption probabilities `p^ = -G^^{-T} q` from an existing
/// factorization, with the residual check but without clipping.
pub(crate) fn probabilities_restricted(prob: &AbsorptionProblem, lu: &BandLu) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = prob.inflow.iter().map(|q| -q).collect();
    let mut p = rhs.clone();
    lu.solve_transpose(&mut p);
    let residual = transpose_residual(&prob.restricted, &p, &rhs);
    let bound = RESIDUAL_FACTOR * inf_norm(&rhs);
    if residual > bound {
        return Err(Error::Residual { residual, bound });
    }
    let worst = p.iter().map(|v| (-v).max(v - 1.0)).fold(0.0, f64::max);
    if worst > CLIP_SLACK {
        warn!("absorption probabilities leave [0, 1] by {worst:e} before clipping");
    }
    Ok(p)
}

/// Restricted termination times `t^ = -G^^{-T} e`.
pub(crate) fn times_restricted(prob: &AbsorptionProblem, lu: &BandLu) -> Result<Vec<f64>> {
    let rhs = vec![-1.0; prob.free.len()];
    let mut t = rhs.clone();
    lu.solve_transpose(&mut t);
    let residual = transpose_residual(&prob.restricted, &t, &rhs);
    let bound = RESIDUAL_FACTOR * inf_norm(&prob.restricted.tr_mul_vec(&t)).max(1.0);
    if residual > bound || t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Residual { residual, bound });
    }
    Ok(t)
}

pub(crate) fn clip_probabilities(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Probability of reaching the target before leaking out.
pub fn absorption_probabilities(prob: &AbsorptionProblem) -> Result<CellField> {
    if prob.free.is_empty() {
        return Ok(CellField::new(FieldTag::Probability, vec![1.0; prob.n()]));
    }
    let lu = prob.factor()?;
    let p = probabilities_restricted(prob, &lu)?;
    Ok(CellField::new(
        FieldTag::Probability,
        prob.expand(&clip_probabilities(&p), 1.0),
    ))
}

/// Expected time until absorption or leak-out, whichever comes first.
pub fn termination_times(prob: &AbsorptionProblem) -> Result<CellField> {
    if prob.free.is_empty() {
        return Ok(CellField::new(FieldTag::Time, vec![0.0; prob.n()]));
    }
    let lu = prob.factor()?;
    let t = times_restricted(prob, &lu)?;
    Ok(CellField::new(
        FieldTag::Time,
        prob.expand(&t.iter().map(|v| v.max(0.0)).collect::<Vec<_>>(), 0.0),
    ))
}

/// Expected absorption times: equal to the termination time where absorption
/// is (numerically) certain, infinite wherever leaking out has positive
/// probability.
pub fn absorption_times(
    prob: &AbsorptionProblem,
    p: &CellField,
    epsilon: f64,
) -> Result<CellField> {
    let t = termination_times(prob)?;
    Ok(splice_absorption_times(
        prob.target(),
        &p.values,
        &t.values,
        epsilon,
    ))
}

pub fn splice_absorption_times(target: &CellSet, p: &[f64], t: &[f64], epsilon: f64) -> CellField {
    let values = (0..p.len())
        .map(|i| {
            if target.contains(i) {
                0.0
            } else if p[i] >= 1.0 - epsilon {
                t[i]
            } else {
                f64::INFINITY
            }
        })
        .collect();
    CellField::new(FieldTag::Time, values)
}

/// `h = E[exp(-A)]`, solving `(I - G^^T) h^ = q`.
pub fn kruzkov_values(prob: &AbsorptionProblem) -> Result<CellField> {
    if prob.free.is_empty() {
        return Ok(CellField::new(FieldTag::Kruzkov, vec![1.0; prob.n()]));
    }
    let m = prob.free.len();
    let identity = CscMatrix::from_triplets(m, m, &(0..m).map(|i| (i, i, 1.0)).collect::<Vec<_>>());
    let shifted = identity.add_scaled(&prob.restricted, -1.0);
    let lu = BandLu::factor(&shifted)?;
    let mut h = prob.inflow.clone();
    lu.solve_transpose(&mut h);
    let residual = transpose_residual(&shifted, &h, &prob.inflow);
    let bound = RESIDUAL_FACTOR * inf_norm(&prob.inflow).max(f64::MIN_POSITIVE);
    if residual > bound {
        return Err(Error::Residual { residual, bound });
    }
    Ok(CellField::new(
        FieldTag::Kruzkov,
        prob.expand(&clip_probabilities(&h), 1.0),
    ))
}

/// Expected absorption time conditioned on absorption, on the cells with
/// `p >= floor`; `+inf` elsewhere and `0` on the target.
pub fn conditioned_times(prob: &AbsorptionProblem, p: &CellField, floor: f64) -> Result<CellField> {
    let n = prob.n();
    let support: Vec<usize> = prob
        .free
        .iter()
        .copied()
        .filter(|&i| p.values[i] >= floor)
        .collect();
    let mut values = vec![f64::INFINITY; n];
    for &i in prob.target.cells() {
        values[i] = 0.0;
    }
    if support.is_empty() {
        return Ok(CellField::new(FieldTag::CondTime, values));
    }
    let min_p = support
        .iter()
        .map(|&i| p.values[i])
        .fold(f64::INFINITY, f64::min);
    if min_p < 1e-8 {
        warn!("conditioned times are ill-conditioned: min p on the support is {min_p:e}");
    }
    let sub = prob.generator.rates().principal_submatrix(&support);
    let lu = BandLu::factor(&sub)?;
    let rhs: Vec<f64> = support.iter().map(|&i| -p.values[i]).collect();
    let mut u = rhs.clone();
    lu.solve_transpose(&mut u);
    let residual = transpose_residual(&sub, &u, &rhs);
    let bound = RESIDUAL_FACTOR * inf_norm(&sub.tr_mul_vec(&u)).max(inf_norm(&rhs));
    if residual > bound {
        return Err(Error::Residual { residual, bound });
    }
    for (&i, ui) in support.iter().zip(u) {
        values[i] = ui / p.values[i];
    }
    Ok(CellField::new(FieldTag::CondTime, values))
}
