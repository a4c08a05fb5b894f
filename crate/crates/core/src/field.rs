//! Parameter-dependent vector fields `v(x; b)`.
//!
//! Parameters are flat vectors; matrix-valued controls are flattened
//! row-major, so `b = (B11, B12, B21, B22)` for a 2x2 matrix `B`.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A fixed (parameter-free) vector field on `R^d`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// A vector field depending on `r` real parameters.
pub trait ParamField: Send + Sync {
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;
    fn eval(&self, x: &[f64], b: &[f64], out: &mut [f64]);
    /// Partial derivative `dv/db_l`. Fields that are only piecewise
    /// differentiable in `b` return a one-sided choice on the kinks.
    fn eval_dparam(&self, x: &[f64], b: &[f64], l: usize, out: &mut [f64]);
    /// Exact decomposition `v(x; b) = v_0(x) + sum_l b_l v_c(x; e_l)`, if any.
    fn affine(&self) -> Option<&dyn AffineParts> {
        None
    }
}

pub trait AffineParts: Send + Sync {
    fn eval_base(&self, x: &[f64], out: &mut [f64]);
    fn eval_component(&self, x: &[f64], l: usize, out: &mut [f64]);
}

fn check_dims(pf: &dyn ParamField, x: &[f64], b: &[f64]) -> Result<()> {
    if x.len() != pf.dim() {
        return Err(Error::DimensionMismatch {
            expected: pf.dim(),
            got: x.len(),
        });
    }
    if b.len() != pf.n_params() {
        return Err(Error::DimensionMismatch {
            expected: pf.n_params(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Checked evaluation of `v(x; b)`.
pub fn eval_field(pf: &dyn ParamField, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_dims(pf, x, b)?;
    let mut out = vec![0.0; pf.dim()];
    pf.eval(x, b, &mut out);
    Ok(out)
}

/// Checked evaluation of `dv/db_l (x; b)`.
pub fn eval_dfield(pf: &dyn ParamField, x: &[f64], b: &[f64], l: usize) -> Result<Vec<f64>> {
    check_dims(pf, x, b)?;
    if l >= pf.n_params() {
        return Err(Error::ParamIndex {
            index: l,
            count: pf.n_params(),
        });
    }
    let mut out = vec![0.0; pf.dim()];
    pf.eval_dparam(x, b, l, &mut out);
    Ok(out)
}

pub fn affine_components(pf: &dyn ParamField) -> Option<&dyn AffineParts> {
    pf.affine()
}

/// `v(.; b)` for a fixed `b`.
pub struct FieldAt<'a> {
    pub field: &'a dyn ParamField,
    pub params: &'a [f64],
}

impl VectorField for FieldAt<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.field.eval(x, self.params, out)
    }
}

/// `dv/db_l (.; b)` for a fixed `b`.
pub struct ParamDirection<'a> {
    pub field: &'a dyn ParamField,
    pub params: &'a [f64],
    pub index: usize,
}

impl VectorField for ParamDirection<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.field.eval_dparam(x, self.params, self.index, out)
    }
}

pub struct AffineBase<'a> {
    pub parts: &'a dyn AffineParts,
    pub dim: usize,
}

impl VectorField for AffineBase<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.parts.eval_base(x, out)
    }
}

/// `sign * v_c(.; e_l)`.
pub struct AffineComponent<'a> {
    pub parts: &'a dyn AffineParts,
    pub dim: usize,
    pub index: usize,
    pub sign: f64,
}

impl VectorField for AffineComponent<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.parts.eval_component(x, self.index, out);
        out.iter_mut().for_each(|v| *v *= self.sign);
    }
}

/// `c * v` for a fixed field `v`.
pub struct Scaled<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: VectorField> VectorField for Scaled<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.inner.eval(x, out);
        out.iter_mut().for_each(|v| *v *= self.factor);
    }
}

/// Sum of two fixed fields, `u + c * w`.
pub struct Shifted<F, G> {
    pub base: F,
    pub direction: G,
    pub step: f64,
}

impl<F: VectorField, G: VectorField> VectorField for Shifted<F, G> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.base.eval(x, out);
        let mut w = vec![0.0; out.len()];
        self.direction.eval(x, &mut w);
        for (o, wi) in out.iter_mut().zip(w) {
            *o += self.step * wi;
        }
    }
}

type EvalFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
type DerivFn = dyn Fn(&[f64], &[f64], usize, &mut [f64]) + Send + Sync;
type BaseFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type ComponentFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;

struct CallbackAffine {
    base: Arc<BaseFn>,
    component: Arc<ComponentFn>,
}

impl AffineParts for CallbackAffine {
    fn eval_base(&self, x: &[f64], out: &mut [f64]) {
        (self.base)(x, out)
    }
    fn eval_component(&self, x: &[f64], l: usize, out: &mut [f64]) {
        (self.component)(x, l, out)
    }
}

/// A user-supplied field given by closures.
#[derive(Clone)]
pub struct CallbackField {
    dim: usize,
    n_params: usize,
    eval: Arc<EvalFn>,
    deriv: Arc<DerivFn>,
    affine: Option<Arc<CallbackAffine>>,
}

impl CallbackField {
    pub fn new(
        dim: usize,
        n_params: usize,
        eval: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        deriv: impl Fn(&[f64], &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            n_params,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            affine: None,
        }
    }

    /// Build an exactly affine field from its base and component fields.
    pub fn affine(
        dim: usize,
        n_params: usize,
        base: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        component: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        let base: Arc<BaseFn> = Arc::new(base);
        let component: Arc<ComponentFn> = Arc::new(component);
        let (b0, c0) = (base.clone(), component.clone());
        let c1 = component.clone();
        let eval = move |x: &[f64], b: &[f64], out: &mut [f64]| {
            b0(x, out);
            let mut w = vec![0.0; out.len()];
            for (l, bl) in b.iter().enumerate() {
                c0(x, l, &mut w);
                out.iter_mut().zip(&w).for_each(|(o, wi)| *o += bl * wi);
            }
        };
        let deriv = move |x: &[f64], _b: &[f64], l: usize, out: &mut [f64]| c1(x, l, out);
        Self {
            dim,
            n_params,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            affine: Some(Arc::new(CallbackAffine { base, component })),
        }
    }
}

impl ParamField for CallbackField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn eval(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        (self.eval)(x, b, out)
    }
    fn eval_dparam(&self, x: &[f64], b: &[f64], l: usize, out: &mut [f64]) {
        (self.deriv)(x, b, l, out)
    }
    fn affine(&self) -> Option<&dyn AffineParts> {
        self.affine.as_deref().map(|a| a as &dyn AffineParts)
    }
}

/// Constant velocity, no parameters.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub velocity: Vec<f64>,
}

impl ParamField for ConstantField {
    fn dim(&self) -> usize {
        self.velocity.len()
    }
    fn n_params(&self) -> usize {
        0
    }
    fn eval(&self, _x: &[f64], _b: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.velocity)
    }
    fn eval_dparam(&self, _x: &[f64], _b: &[f64], _l: usize, out: &mut [f64]) {
        out.fill(0.0)
    }
    fn affine(&self) -> Option<&dyn AffineParts> {
        Some(self)
    }
}

impl AffineParts for ConstantField {
    fn eval_base(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.velocity)
    }
    fn eval_component(&self, _x: &[f64], _l: usize, out: &mut [f64]) {
        out.fill(0.0)
    }
}

/// Planar linear focus `x' = -decay * x - rotation * J x`, spiralling into
/// the origin when `decay > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFocus {
    pub decay: f64,
    pub rotation: f64,
}

impl ParamField for LinearFocus {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        0
    }
    fn eval(&self, x: &[f64], _b: &[f64], out: &mut [f64]) {
        out[0] = -self.decay * x[0] - self.rotation * x[1];
        out[1] = self.rotation * x[0] - self.decay * x[1];
    }
    fn eval_dparam(&self, _x: &[f64], _b: &[f64], _l: usize, out: &mut [f64]) {
        out.fill(0.0)
    }
}

/// The uncontrolled part shared by both planar benchmarks:
/// `3 |x|^2 (x1 + 2 x2 + 3 x2^2 - 50 x2^4, 2 x1 + 3 x1^2 + x2)`.
fn benchmark_drift(x: &[f64], out: &mut [f64]) {
    let (x1, x2) = (x[0], x[1]);
    let r2 = 3.0 * (x1 * x1 + x2 * x2);
    out[0] = r2 * (x1 + 2.0 * x2 + 3.0 * x2 * x2 - 50.0 * x2.powi(4));
    out[1] = r2 * (2.0 * x1 + 3.0 * x1 * x1 + x2);
}

/// Row-major `B x` for a 2x2 matrix flattened into `b`.
fn matvec2(b: &[f64], x: &[f64]) -> [f64; 2] {
    [b[0] * x[0] + b[1] * x[1], b[2] * x[0] + b[3] * x[1]]
}

/// `d (B x) / d b_l`, zero except in the row that `b_l` belongs to.
fn matvec2_partial(x: &[f64], l: usize) -> [f64; 2] {
    let v = x[l % 2];
    if l < 2 {
        [v, 0.0]
    } else {
        [0.0, v]
    }
}

/// Planar benchmark with control `v_c = diag(-1, -1 - 2 x2) B x`, optionally
/// clamped componentwise to `[-s, s]`.
#[derive(Debug, Clone, Copy)]
pub struct SystemE {
    pub saturation: Option<f64>,
}

impl SystemE {
    pub fn with_saturation(bound: f64) -> Self {
        Self {
            saturation: Some(bound),
        }
    }

    fn gains(x: &[f64]) -> [f64; 2] {
        [-1.0, -1.0 - 2.0 * x[1]]
    }

    fn raw_control(x: &[f64], b: &[f64]) -> [f64; 2] {
        let m = Self::gains(x);
        let bx = matvec2(b, x);
        [m[0] * bx[0], m[1] * bx[1]]
    }
}

impl ParamField for SystemE {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        4
    }
    fn eval(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        benchmark_drift(x, out);
        let vc = Self::raw_control(x, b);
        for k in 0..2 {
            out[k] += match self.saturation {
                Some(s) => vc[k].clamp(-s, s),
                None => vc[k],
            };
        }
    }
    fn eval_dparam(&self, x: &[f64], b: &[f64], l: usize, out: &mut [f64]) {
        let m = Self::gains(x);
        let d = matvec2_partial(x, l);
        let vc = Self::raw_control(x, b);
        for k in 0..2 {
            let clamped = self.saturation.is_some_and(|s| vc[k].abs() > s);
            out[k] = if clamped { 0.0 } else { m[k] * d[k] };
        }
    }
    fn affine(&self) -> Option<&dyn AffineParts> {
        match self.saturation {
            None => Some(self),
            Some(_) => None,
        }
    }
}

impl AffineParts for SystemE {
    fn eval_base(&self, x: &[f64], out: &mut [f64]) {
        benchmark_drift(x, out)
    }
    fn eval_component(&self, x: &[f64], l: usize, out: &mut [f64]) {
        let m = Self::gains(x);
        let d = matvec2_partial(x, l);
        out[0] = m[0] * d[0];
        out[1] = m[1] * d[1];
    }
}

/// Planar benchmark with the affine control `v_c = diag(-1, -0.1) B x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemEmod;

const EMOD_GAINS: [f64; 2] = [-1.0, -0.1];

impl ParamField for SystemEmod {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        4
    }
    fn eval(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        benchmark_drift(x, out);
        let bx = matvec2(b, x);
        out[0] += EMOD_GAINS[0] * bx[0];
        out[1] += EMOD_GAINS[1] * bx[1];
    }
    fn eval_dparam(&self, x: &[f64], _b: &[f64], l: usize, out: &mut [f64]) {
        self.eval_component(x, l, out)
    }
    fn affine(&self) -> Option<&dyn AffineParts> {
        Some(self)
    }
}

impl AffineParts for SystemEmod {
    fn eval_base(&self, x: &[f64], out: &mut [f64]) {
        benchmark_drift(x, out)
    }
    fn eval_component(&self, x: &[f64], l: usize, out: &mut [f64]) {
        let d = matvec2_partial(x, l);
        out[0] = EMOD_GAINS[0] * d[0];
        out[1] = EMOD_GAINS[1] * d[1];
    }
}

/// Look up a built-in planar benchmark by name.
pub fn benchmark(name: &str, saturation: Option<f64>) -> Option<Box<dyn ParamField>> {
    match name {
        "systemE" => Some(Box::new(SystemE { saturation })),
        "systemEmod" => Some(Box::new(SystemEmod)),
        _ => None,
    }
}
