//! Browser demo: the `systemE` benchmark on a square grid, with the DOA
//! heatmap, time-like fields and a short optimization run.

use doaopt::field::SystemE;
use doaopt::generator::assemble;
use doaopt::grid::{AxisBox, CellSet, Grid, Region, SelectRule};
use doaopt::optimize::{maximize_doa, OptConfig};
use doaopt::solve::{
    absorption_probabilities, absorption_times, kruzkov_values, termination_times,
    AbsorptionProblem,
};
use wasm_bindgen::prelude::*;

/// Plain-Rust state behind [`Demo`].
pub struct Session {
    grid: Grid,
    field: SystemE,
    target: CellSet,
    b: Vec<f64>,
    cfg: OptConfig,
}

impl Session {
    pub fn new(resolution: usize, target_half_width: f64) -> Result<Self, String> {
        if !(2..=256).contains(&resolution) {
            return Err(format!("resolution {resolution} outside 2..=256"));
        }
        let grid = Grid::new(
            AxisBox::cube(2, -1.0, 1.0).map_err(|e| e.to_string())?,
            vec![resolution; 2],
        )
        .map_err(|e| e.to_string())?;
        let tbox =
            AxisBox::cube(2, -target_half_width, target_half_width).map_err(|e| e.to_string())?;
        let target = grid
            .select_cells(&Region::Box(tbox), SelectRule::CenterIn)
            .map_err(|e| e.to_string())?;
        if target.is_empty() {
            return Err("target box contains no cell center; widen it or refine the grid".into());
        }
        Ok(Self {
            grid,
            field: SystemE::with_saturation(0.3),
            target,
            b: vec![1.0, 1.0, 0.0, 1.0],
            cfg: OptConfig::default(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.grid.resolution()[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.b
    }

    /// `b` is the control matrix flattened row-major.
    pub fn set_params(&mut self, b: &[f64]) -> Result<(), String> {
        if b.len() != 4 || b.iter().any(|v| !v.is_finite()) {
            return Err("expected four finite matrix entries".into());
        }
        self.b = b.to_vec();
        Ok(())
    }

    fn problem(&self) -> Result<AbsorptionProblem, String> {
        let g = assemble(&self.grid, &self.field, &self.b, &self.cfg.quadrature)
            .map_err(|e| e.to_string())?;
        AbsorptionProblem::new(g, self.target.clone()).map_err(|e| e.to_string())
    }

    /// Row-major cell values of `p`, `t`, `a` or `h` at the current parameters.
    pub fn field(&self, which: &str) -> Result<Vec<f64>, String> {
        let prob = self.problem()?;
        let f = match which {
            "p" => absorption_probabilities(&prob),
            "t" => termination_times(&prob),
            "h" => kruzkov_values(&prob),
            "a" => absorption_probabilities(&prob)
                .and_then(|p| absorption_times(&prob, &p, self.cfg.sure_epsilon)),
            other => return Err(format!("unknown field '{other}' (p, t, a or h)")),
        };
        f.map(|f| f.values).map_err(|e| e.to_string())
    }

    /// `sum_i m_i p_i - alpha |b|^2` at the current parameters.
    pub fn objective(&self) -> Result<f64, String> {
        let p = self.field("p")?;
        let b2: f64 = self.b.iter().map(|v| v * v).sum();
        Ok(p.iter().sum::<f64>() * self.grid.cell_volume() - self.cfg.alpha * b2)
    }

    /// Run `steps` gradient-ascent steps from the current parameters and
    /// move to the last iterate. Returns rows `[f, |Df|, b_1..b_4]`.
    pub fn optimize(&mut self, steps: usize) -> Result<Vec<f64>, String> {
        let cfg = OptConfig {
            max_iters: steps,
            ..self.cfg.clone()
        };
        let out = maximize_doa(&self.grid, &self.field, &self.target, None, &cfg, &self.b)
            .map_err(|e| e.to_string())?;
        if let doaopt::optimize::StopReason::Failed(e) = &out.stop {
            return Err(e.to_string());
        }
        self.b = out.params.clone();
        Ok(out
            .trace
            .records
            .iter()
            .flat_map(|r| {
                [r.objective, r.grad_norm]
                    .into_iter()
                    .chain(r.params.iter().copied())
            })
            .collect())
    }
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(resolution: usize, target_half_width: f64) -> Result<Demo, JsError> {
        Ok(Demo {
            inner: Session::new(resolution, target_half_width).map_err(|e| JsError::new(&e))?,
        })
    }

    pub fn resolution(&self) -> usize {
        self.inner.resolution()
    }

    pub fn params(&self) -> Vec<f64> {
        self.inner.params().to_vec()
    }

    #[wasm_bindgen(js_name = setParams)]
    pub fn set_params(&mut self, b: &[f64]) -> Result<(), JsError> {
        self.inner.set_params(b).map_err(|e| JsError::new(&e))
    }

    pub fn field(&self, which: &str) -> Result<Vec<f64>, JsError> {
        self.inner.field(which).map_err(|e| JsError::new(&e))
    }

    pub fn objective(&self) -> Result<f64, JsError> {
        self.inner.objective().map_err(|e| JsError::new(&e))
    }

    pub fn optimize(&mut self, steps: usize) -> Result<Vec<f64>, JsError> {
        self.inner.optimize(steps).map_err(|e| JsError::new(&e))
    }
}
