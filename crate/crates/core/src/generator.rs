//! Upwind generator matrices of the Markov jump process induced by a vector
//! field on a rectangular grid.
//!
//! Entry `G[i][j]` is the jump rate from cell `j` into its face neighbour
//! `i`: the positive part of the outward flux `v . n_j` through the shared
//! face divided by the volume of cell `j`. Outflow through the boundary of
//! the state space is not stored in the matrix; it shows up as a column sum
//! below zero and is recorded separately as the leak rate of the cell.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    AffineBase, AffineComponent, AffineParts, FieldAt, ParamDirection, ParamField, VectorField,
};
use crate::grid::{Grid, Side};
use crate::sparse::CscMatrix;

/// Tensor Gauss-Legendre rule on the (d-1)-dimensional cell faces.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Legendre rule with `points` nodes per face axis, `1..=5`.
    pub fn gauss_legendre(points: usize) -> Result<Self> {
        let (nodes, weights): (Vec<f64>, Vec<f64>) = match points {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let a = 1.0 / 3f64.sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            3 => {
                let a = (3.0f64 / 5.0).sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            4 => {
                let (a, b) = (0.339_981_043_584_856_3, 0.861_136_311_594_052_6);
                let (wa, wb) = (0.652_145_154_862_546_1, 0.347_854_845_137_453_9);
                (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
            }
            5 => {
                let (a, b) = (0.538_469_310_105_683_1, 0.906_179_845_938_664);
                let (w0, wa, wb) = (
                    0.568_888_888_888_888_9,
                    0.478_628_670_499_366_5,
                    0.236_926_885_056_189_1,
                );
                (vec![-b, -a, 0.0, a, b], vec![wb, wa, w0, wa, wb])
            }
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "quadrature order {points} not in 1..=5"
                )))
            }
        };
        Ok(Self { nodes, weights })
    }

    pub fn points(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node offsets (relative to the lower face corner) and weights summing to
    /// the face measure, for faces normal to `axis`.
    fn face_stencil(&self, grid: &Grid, axis: usize) -> Vec<(Vec<f64>, f64)> {
        let d = grid.dim();
        let mut stencil = vec![(vec![0.0; d], grid.face_measure(axis))];
        for k in (0..d).filter(|&k| k != axis) {
            let w = grid.widths()[k];
            stencil = stencil
                .into_iter()
                .flat_map(|(off, wt)| {
                    self.nodes.iter().zip(&self.weights).map(move |(&t, &q)| {
                        let mut o = off.clone();
                        o[k] = 0.5 * w * (t + 1.0);
                        (o, wt * 0.5 * q)
                    })
                })
                .collect();
        }
        stencil
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_legendre(2).expect("order 2 is supported")
    }
}

/// Sparse generator with per-cell leak rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    dim: usize,
    rates: CscMatrix,
    leak: Vec<f64>,
}

impl Generator {
    pub fn from_parts(dim: usize, rates: CscMatrix, leak: Vec<f64>) -> Result<Self> {
        if rates.n_rows() != rates.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: rates.n_rows(),
                got: rates.n_cols(),
            });
        }
        if leak.len() != rates.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: rates.n_cols(),
                got: leak.len(),
            });
        }
        Ok(Self { dim, rates, leak })
    }

    /// State-space dimension of the grid the generator was built on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.leak.len()
    }

    pub fn rates(&self) -> &CscMatrix {
        &self.rates
    }

    pub fn leak(&self) -> &[f64] {
        &self.leak
    }

    pub fn nnz(&self) -> usize {
        self.rates.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rates.get(i, j)
    }

    /// Conical combination `self + c * other`, `c >= 0`.
    pub fn add_scaled(&self, other: &Generator, c: f64) -> Generator {
        debug_assert!(c >= 0.0);
        let leak = self
            .leak
            .iter()
            .zip(&other.leak)
            .map(|(a, b)| a + c * b)
            .collect();
        Generator {
            dim: self.dim,
            rates: self.rates.add_scaled(&other.rates, c),
            leak,
        }
    }

    pub fn scaled(&self, c: f64) -> Generator {
        Generator {
            dim: self.dim,
            rates: self.rates.scaled(c),
            leak: self.leak.iter().map(|v| c * v).collect(),
        }
    }

    /// Check the sign pattern and the column-sum identity
    /// `sum_i G[i][j] = -leak[j] <= 0`, up to `tol` relative to the diagonal.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        for j in 0..self.n() {
            let (rows, vals) = self.rates.col(j);
            let mut diag = 0.0;
            for (&i, &v) in rows.iter().zip(vals) {
                if i == j {
                    diag = v;
                } else if v < 0.0 {
                    return Err(format!("negative off-diagonal G[{i}][{j}] = {v}"));
                }
            }
            if diag > 0.0 {
                return Err(format!("positive diagonal G[{j}][{j}] = {diag}"));
            }
            let sum: f64 = vals.iter().sum();
            let scale = tol * diag.abs().max(1.0);
            if sum > scale {
                return Err(format!("column {j} sums to {sum} > 0"));
            }
            if self.leak[j] < -scale || (sum + self.leak[j]).abs() > scale {
                return Err(format!(
                    "column {j}: sum {sum} inconsistent with leak {}",
                    self.leak[j]
                ));
            }
        }
        Ok(())
    }
}

/// Per-face integrals: for every cell and axis the upper face and, on the
/// lower domain boundary, the lower face. Each face carries one
/// `[forward, backward]` pair per output matrix, where forward is the
/// integrand for transport along `+e_axis` and backward along `-e_axis`.
struct FaceIntegrals {
    outputs: usize,
    dim: usize,
    upper: Vec<[f64; 2]>,
    lower: Vec<[f64; 2]>,
}

impl FaceIntegrals {
    fn slot(&self, cell: usize, axis: usize, o: usize) -> usize {
        (cell * self.dim + axis) * self.outputs + o
    }
}

/// Integrand callback: given a node `x` on a face normal to `axis`, write one
/// `[forward, backward]` pair per output.
fn integrate_faces<F>(
    grid: &Grid,
    quad: &QuadratureRule,
    outputs: usize,
    integrand: F,
) -> Result<FaceIntegrals>
where
    F: Fn(&[f64], usize, &mut [[f64; 2]]) -> Result<()> + Sync,
{
    let d = grid.dim();
    let stencils: Vec<_> = (0..d).map(|k| quad.face_stencil(grid, k)).collect();
    let per_cell: Vec<(Vec<[f64; 2]>, Vec<[f64; 2]>)> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let mut upper = vec![[0.0; 2]; d * outputs];
            let mut lower = vec![[0.0; 2]; d * outputs];
            let mut origin = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut vals = vec![[0.0; 2]; outputs];
            for axis in 0..d {
                let mut faces = vec![(
                    Side::Upper,
                    &mut upper[axis * outputs..(axis + 1) * outputs],
                )];
                if grid.axis_index(cell, axis) == 0 {
                    faces.push((
                        Side::Lower,
                        &mut lower[axis * outputs..(axis + 1) * outputs],
                    ));
                }
                for (side, acc) in faces {
                    grid.face_origin(cell, axis, side, &mut origin);
                    for (off, w) in &stencils[axis] {
                        for k in 0..d {
                            x[k] = origin[k] + off[k];
                        }
                        integrand(&x, axis, &mut vals)?;
                        for (a, v) in acc.iter_mut().zip(&vals) {
                            a[0] += w * v[0];
                            a[1] += w * v[1];
                        }
                    }
                }
            }
            Ok((upper, lower))
        })
        .collect::<Result<_>>()?;
    let mut upper = Vec::with_capacity(grid.n_cells() * d * outputs);
    let mut lower = Vec::with_capacity(grid.n_cells() * d * outputs);
    for (u, l) in per_cell {
        upper.extend(u);
        lower.extend(l);
    }
    Ok(FaceIntegrals {
        outputs,
        dim: d,
        upper,
        lower,
    })
}

/// Assemble output `o` of the face integrals into a rate matrix plus the
/// outflow through the domain boundary.
fn build_matrix(grid: &Grid, fi: &FaceIntegrals, o: usize) -> (CscMatrix, Vec<f64>) {
    let d = grid.dim();
    let inv_vol = 1.0 / grid.cell_volume();
    let mut leak = vec![0.0; grid.n_cells()];
    let columns = (0..grid.n_cells())
        .map(|j| {
            let mut col = Vec::with_capacity(2 * d + 1);
            let mut diag = 0.0;
            for axis in 0..d {
                let up = inv_vol * fi.upper[fi.slot(j, axis, o)][0];
                match grid.neighbor(j, axis, Side::Upper) {
                    Some(nb) => col.push((nb, up)),
                    None => leak[j] += up,
                }
                diag -= up;
                let down = match grid.neighbor(j, axis, Side::Lower) {
                    Some(nb) => {
                        let r = inv_vol * fi.upper[fi.slot(nb, axis, o)][1];
                        col.push((nb, r));
                        r
                    }
                    None => {
                        let r = inv_vol * fi.lower[fi.slot(j, axis, o)][1];
                        leak[j] += r;
                        r
                    }
                };
                diag -= down;
            }
            col.push((j, diag));
            col
        })
        .collect();
    (CscMatrix::from_columns(grid.n_cells(), columns), leak)
}

fn check_finite(x: &[f64], v: &[f64]) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { point: x.to_vec() })
    }
}

fn check_field_dim(grid: &Grid, dim: usize) -> Result<()> {
    if dim != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: dim,
        });
    }
    Ok(())
}

/// Generator of a fixed vector field.
pub fn assemble_field(
    grid: &Grid,
    field: &dyn VectorField,
    quad: &QuadratureRule,
) -> Result<Generator> {
    check_field_dim(grid, field.dim())?;
    let d = grid.dim();
    let fi = integrate_faces(grid, quad, 1, |x, axis, out| {
        let mut v = vec![0.0; d];
        field.eval(x, &mut v);
        check_finite(x, &v)?;
        let s = v[axis];
        out[0] = [s.max(0.0), (-s).max(0.0)];
        Ok(())
    })?;
    let (rates, leak) = build_matrix(grid, &fi, 0);
    Ok(Generator {
        dim: d,
        rates,
        leak,
    })
}

/// Generator of `v(.; b)`.
pub fn assemble(
    grid: &Grid,
    pf: &dyn ParamField,
    b: &[f64],
    quad: &QuadratureRule,
) -> Result<Generator> {
    check_params(pf, b)?;
    assemble_field(
        grid,
        &FieldAt {
            field: pf,
            params: b,
        },
        quad,
    )
}

fn check_params(pf: &dyn ParamField, b: &[f64]) -> Result<()> {
    if b.len() != pf.n_params() {
        return Err(Error::DimensionMismatch {
            expected: pf.n_params(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Directional derivative of the generator at `field` in direction
/// `direction`, freezing the upwind active set `{v . n >= 0}` at the
/// quadrature nodes.
pub fn assemble_directional_field(
    grid: &Grid,
    field: &dyn VectorField,
    direction: &dyn VectorField,
    quad: &QuadratureRule,
) -> Result<CscMatrix> {
    check_field_dim(grid, field.dim())?;
    check_field_dim(grid, direction.dim())?;
    let d = grid.dim();
    let fi = integrate_faces(grid, quad, 1, |x, axis, out| {
        let mut v = vec![0.0; d];
        let mut dv = vec![0.0; d];
        field.eval(x, &mut v);
        direction.eval(x, &mut dv);
        check_finite(x, &v)?;
        check_finite(x, &dv)?;
        out[0] = directional_pair(v[axis], dv[axis]);
        Ok(())
    })?;
    Ok(build_matrix(grid, &fi, 0).0)
}

fn directional_pair(s: f64, ds: f64) -> [f64; 2] {
    [
        if s >= 0.0 { ds } else { 0.0 },
        if s <= 0.0 { -ds } else { 0.0 },
    ]
}

/// `dG/db_l` at `b`.
pub fn assemble_directional(
    grid: &Grid,
    pf: &dyn ParamField,
    b: &[f64],
    l: usize,
    quad: &QuadratureRule,
) -> Result<CscMatrix> {
    check_params(pf, b)?;
    if l >= pf.n_params() {
        return Err(Error::ParamIndex {
            index: l,
            count: pf.n_params(),
        });
    }
    assemble_directional_field(
        grid,
        &FieldAt {
            field: pf,
            params: b,
        },
        &ParamDirection {
            field: pf,
            params: b,
            index: l,
        },
        quad,
    )
}

/// Generator and all `r` parameter derivatives from a single sweep over the
/// quadrature nodes.
pub fn assemble_with_gradient(
    grid: &Grid,
    pf: &dyn ParamField,
    b: &[f64],
    quad: &QuadratureRule,
) -> Result<(Generator, Vec<CscMatrix>)> {
    check_params(pf, b)?;
    check_field_dim(grid, pf.dim())?;
    let d = grid.dim();
    let r = pf.n_params();
    let fi = integrate_faces(grid, quad, r + 1, |x, axis, out| {
        let mut v = vec![0.0; d];
        pf.eval(x, b, &mut v);
        check_finite(x, &v)?;
        let s = v[axis];
        out[0] = [s.max(0.0), (-s).max(0.0)];
        for l in 0..r {
            pf.eval_dparam(x, b, l, &mut v);
            check_finite(x, &v)?;
            out[l + 1] = directional_pair(s, v[axis]);
        }
        Ok(())
    })?;
    let (rates, leak) = build_matrix(grid, &fi, 0);
    let partials = (1..=r).map(|o| build_matrix(grid, &fi, o).0).collect();
    Ok((
        Generator {
            dim: d,
            rates,
            leak,
        },
        partials,
    ))
}

/// Generators of the base field and of `+v_c(.; e_l)` and `-v_c(.; e_l)`
/// for an affine parameter dependence.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    pub base: Generator,
    pub plus: Vec<Generator>,
    pub minus: Vec<Generator>,
}

/// Below this magnitude a parameter counts as zero in the affine path.
pub const AFFINE_DEADBAND: f64 = 1e-12;

impl GeneratorBundle {
    /// Runs `2r + 1` assemblies.
    pub fn assemble(grid: &Grid, pf: &dyn ParamField, quad: &QuadratureRule) -> Result<Self> {
        let parts = pf.affine().ok_or(Error::NotAffine)?;
        Self::from_parts(grid, parts, pf.dim(), pf.n_params(), quad)
    }

    pub fn from_parts(
        grid: &Grid,
        parts: &dyn AffineParts,
        dim: usize,
        n_params: usize,
        quad: &QuadratureRule,
    ) -> Result<Self> {
        let base = assemble_field(grid, &AffineBase { parts, dim }, quad)?;
        let component = |l, sign| {
            assemble_field(
                grid,
                &AffineComponent {
                    parts,
                    dim,
                    index: l,
                    sign,
                },
                quad,
            )
        };
        let plus = (0..n_params)
            .map(|l| component(l, 1.0))
            .collect::<Result<_>>()?;
        let minus = (0..n_params)
            .map(|l| component(l, -1.0))
            .collect::<Result<_>>()?;
        Ok(Self { base, plus, minus })
    }

    pub fn n_params(&self) -> usize {
        self.plus.len()
    }

    /// `G_0 + sum_l |b_l| G(sign(b_l) v_c(.; e_l))`.
    pub fn combine(&self, b: &[f64]) -> Generator {
        b.iter()
            .enumerate()
            .fold(self.base.clone(), |acc, (l, &bl)| {
                if bl == 0.0 {
                    acc
                } else if bl > 0.0 {
                    acc.add_scaled(&self.plus[l], bl)
                } else {
                    acc.add_scaled(&self.minus[l], -bl)
                }
            })
    }

    /// Derivative of [`combine`](Self::combine) in `b_l`. Inside the deadband
    /// around zero the right-sided derivative `G_plus[l]` is returned and the
    /// flag is set.
    pub fn combine_directional(&self, b: &[f64], l: usize) -> (CscMatrix, bool) {
        let bl = b[l];
        if bl.abs() <= AFFINE_DEADBAND {
            (self.plus[l].rates.clone(), true)
        } else if bl > 0.0 {
            (self.plus[l].rates.clone(), false)
        } else {
            (self.minus[l].rates.scaled(-1.0), false)
        }
    }
}

/// Conical combination for the affine path.
pub fn combine_affine(bundle: &GeneratorBundle, b: &[f64]) -> Generator {
    bundle.combine(b)
}

pub fn combine_affine_directional(bundle: &GeneratorBundle, b: &[f64], l: usize) -> CscMatrix {
    bundle.combine_directional(b, l).0
}
