#![allow(dead_code)]

use doaopt::field::{benchmark, CallbackField, ParamField};
use doaopt::generator::{assemble, Generator, QuadratureRule};
use doaopt::grid::{AxisBox, CellLabel, CellSet, Grid, Region, SelectRule};
use doaopt::optimize::{maximize_doa, minimize_time, Mode, OptConfig, OptOutcome};
use doaopt::solve::{absorption_probabilities, AbsorptionProblem};
use doaopt::sparse::CscMatrix;
use rand::Rng;

/// A random smooth instance around a stable equilibrium at `center`, with
/// an unstable shell so that some cells leak.
pub struct Instance {
    pub grid: Grid,
    pub field: CallbackField,
    pub target: CellSet,
    pub region: CellSet,
    pub b: Vec<f64>,
    pub quad: QuadratureRule,
}

struct Wave {
    offset: f64,
    amp: f64,
    freq: Vec<f64>,
    phase: f64,
}

impl Wave {
    fn random<R: Rng>(d: usize, rng: &mut R) -> Self {
        Self {
            offset: rng.gen_range(-0.1..0.1),
            amp: rng.gen_range(0.0..0.1),
            freq: (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            phase: rng.gen_range(0.0..6.3),
        }
    }

    fn at(&self, x: &[f64]) -> f64 {
        let arg: f64 = self.freq.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.phase;
        self.offset + self.amp * arg.sin()
    }
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let d = if rng.gen_bool(0.3) { 1 } else { 2 };
    let res: Vec<usize> = (0..d)
        .map(|_| {
            if d == 1 {
                rng.gen_range(8..=40)
            } else {
                rng.gen_range(6..=16)
            }
        })
        .collect();
    let grid = Grid::new(AxisBox::cube(d, -1.0, 1.0).unwrap(), res).unwrap();
    let r = rng.gen_range(1..=4);
    let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let k = rng.gen_range(0.6..1.4);
    let s = rng.gen_range(1.5..3.0);
    let rot = if d == 2 {
        rng.gen_range(-1.0..1.0)
    } else {
        0.0
    };
    let beta = rng.gen_range(-0.5..0.5);
    let waves: Vec<Vec<Wave>> = (0..r)
        .map(|_| (0..d).map(|_| Wave::random(d, rng)).collect())
        .collect();
    let waves = std::sync::Arc::new(waves);
    let (c1, c2) = (center.clone(), center.clone());
    let w1 = waves.clone();
    let core = move |x: &[f64], c: &[f64], out: &mut [f64]| {
        let y: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let y2: f64 = y.iter().map(|v| v * v).sum();
        for i in 0..y.len() {
            out[i] = -k * y[i] + s * y2 * y[i];
        }
        if y.len() == 2 {
            out[0] -= rot * y[1];
            out[1] += rot * y[0];
        }
        y
    };
    let last = r - 1;
    let eval = move |x: &[f64], b: &[f64], out: &mut [f64]| {
        let y = core(x, &c1, out);
        for (l, wl) in w1.iter().enumerate() {
            for (i, w) in wl.iter().enumerate() {
                out[i] += b[l] * w.at(x);
            }
        }
        for i in 0..y.len() {
            out[i] += beta * b[0] * b[last] * y[i];
        }
    };
    let deriv = move |x: &[f64], b: &[f64], l: usize, out: &mut [f64]| {
        let mut coef = 0.0;
        if l == 0 {
            coef += b[last];
        }
        if l == last {
            coef += b[0];
        }
        for (i, w) in waves[l].iter().enumerate() {
            out[i] = w.at(x) + beta * coef * (x[i] - c2[i]);
        }
    };
    let field = CallbackField::new(d, r, eval, deriv);
    let half = 0.15f64.max(0.6 * grid.widths()[0]);
    let tbox = AxisBox::new(
        center.iter().map(|c| c - half).collect(),
        center.iter().map(|c| c + half).collect(),
    )
    .unwrap();
    let target = grid
        .select_labeled(&Region::Box(tbox), SelectRule::CenterIn, CellLabel::Target)
        .unwrap();
    let region = grid
        .select_labeled(
            &Region::Ball {
                center: center.clone(),
                radius: 0.35,
            },
            SelectRule::Intersects,
            CellLabel::D0,
        )
        .unwrap();
    let b = (0..r).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let quad = QuadratureRule::gauss_legendre(rng.gen_range(1..=3)).unwrap();
    Instance {
        grid,
        field,
        target,
        region,
        b,
        quad,
    }
}

/// Random generator on `n` states: sparse nonnegative rates, some leak,
/// each state with at least one way out.
pub fn random_generator<R: Rng>(n: usize, rng: &mut R) -> Generator {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut leak = vec![0.0; n];
    for j in 0..n {
        let mut total = 0.0;
        for i in 0..n {
            if i != j && rng.gen_bool(0.35) {
                let v = rng.gen_range(0.1..3.0);
                cols[j].push((i, v));
                total += v;
            }
        }
        if rng.gen_bool(0.4) || total == 0.0 {
            leak[j] = rng.gen_range(0.05..1.5);
        }
        total += leak[j];
        cols[j].push((j, -total));
        cols[j].sort_by_key(|e| e.0);
    }
    Generator::from_parts(1, CscMatrix::from_columns(n, cols), leak).unwrap()
}

pub fn square_grid(n: usize) -> Grid {
    Grid::new(AxisBox::cube(2, -1.0, 1.0).unwrap(), vec![n, n]).unwrap()
}

pub fn system_e() -> Box<dyn ParamField> {
    benchmark("systemE", Some(0.3)).unwrap()
}

pub const DOA_B0: [f64; 4] = [1.0, 1.0, 0.0, 1.0];
pub const TIME_B0: [f64; 4] = [0.89, 0.35, 0.75, 1.4];

pub fn box_target(grid: &Grid, half: f64) -> CellSet {
    grid.select_labeled(
        &Region::Box(AxisBox::cube(2, -half, half).unwrap()),
        SelectRule::CenterIn,
        CellLabel::Target,
    )
    .unwrap()
}

pub fn disk_d0(grid: &Grid) -> CellSet {
    grid.select_labeled(
        &Region::Ball {
            center: vec![0.0, 0.0],
            radius: 0.3,
        },
        SelectRule::Intersects,
        CellLabel::D0,
    )
    .unwrap()
}

/// Fifteen DOA ascent steps from the DOA benchmark start.
pub fn doa_run(n: usize) -> OptOutcome {
    let grid = square_grid(n);
    let cfg = OptConfig::default();
    maximize_doa(
        &grid,
        system_e().as_ref(),
        &box_target(&grid, 0.05),
        None,
        &cfg,
        &DOA_B0,
    )
    .unwrap()
}

/// Fifteen projected descent steps from the time benchmark start.
pub fn time_run(n: usize) -> (OptOutcome, f64) {
    let grid = square_grid(n);
    let d0 = disk_d0(&grid);
    let cfg = OptConfig {
        mode: Mode::MinimizeTime,
        ..OptConfig::default()
    };
    let out = minimize_time(
        &grid,
        system_e().as_ref(),
        &box_target(&grid, 0.03),
        &d0,
        &cfg,
        &TIME_B0,
    )
    .unwrap();
    (out, d0.len() as f64 * grid.cell_volume())
}

/// `sum_i m_i p_i(b) - alpha |b|^2` on a fresh assembly.
pub fn doa_objective(
    grid: &Grid,
    pf: &dyn ParamField,
    target: &CellSet,
    b: &[f64],
    alpha: f64,
    quad: &QuadratureRule,
) -> f64 {
    let g = assemble(grid, pf, b, quad).unwrap();
    let p = absorption_probabilities(&AbsorptionProblem::new(g, target.clone()).unwrap()).unwrap();
    p.integrate(grid.cell_volume(), None) - alpha * b.iter().map(|v| v * v).sum::<f64>()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

pub struct DerivativeReport {
    pub instances: usize,
    pub worst_objective: f64,
    pub worst_direction: f64,
    pub worst_identity: f64,
}

fn fd_gradient(b: &[f64], eps: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..b.len())
        .map(|l| {
            let mut bp = b.to_vec();
            let mut bm = b.to_vec();
            bp[l] += eps;
            bm[l] -= eps;
            (f(&bp) - f(&bm)) / (2.0 * eps)
        })
        .collect()
}

fn shifted(g: &Generator, delta: &CscMatrix, eps: f64) -> Generator {
    Generator::from_parts(g.dim(), g.rates().add_scaled(delta, eps), g.leak().to_vec()).unwrap()
}

fn raw_solution(g: Generator, target: &CellSet) -> Option<(Vec<f64>, Vec<f64>)> {
    let prob = AbsorptionProblem::new(g, target.clone()).ok()?;
    let ws = doaopt::sens::AdjointWorkspace::new(&prob).ok()?;
    Some((ws.raw_probabilities(), ws.raw_times()))
}

/// Gradient and directional-derivative checks over `count` random instances.
pub fn check_derivatives(seed: u64, count: usize) -> Result<DerivativeReport, String> {
    use doaopt::generator::assemble_with_gradient;
    use doaopt::sens::{doa_evaluation, time_evaluation, AdjointWorkspace};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = DerivativeReport {
        instances: 0,
        worst_objective: 0.0,
        worst_direction: 0.0,
        worst_identity: 0.0,
    };
    let alpha = 0.02;
    let mut attempts = 0;
    while report.instances < count {
        attempts += 1;
        if attempts > 10 * count {
            return Err(format!(
                "only {} usable instances after {attempts} draws",
                report.instances
            ));
        }
        let inst = random_instance(&mut rng);
        let Ok((g, partials)) =
            assemble_with_gradient(&inst.grid, &inst.field, &inst.b, &inst.quad)
        else {
            continue;
        };
        let Ok(prob) = AbsorptionProblem::new(g.clone(), inst.target.clone()) else {
            continue;
        };
        let Ok(ws) = AdjointWorkspace::new(&prob) else {
            continue;
        };
        let vol = inst.grid.cell_volume();
        let solve_at = |b: &[f64]| {
            let g = assemble(&inst.grid, &inst.field, b, &inst.quad).unwrap();
            let prob = AbsorptionProblem::new(g, inst.target.clone()).unwrap();
            let ws = AdjointWorkspace::new(&prob).unwrap();
            let p = ws.probabilities();
            let t = ws.times();
            let b2: f64 = b.iter().map(|v| v * v).sum();
            (
                p.integrate(vol, None) - alpha * b2,
                t.integrate(vol, Some(&inst.region)) + alpha * b2,
            )
        };

        let doa = doa_evaluation(&prob, &partials, vol, None, &inst.b, alpha)
            .map_err(|e| e.to_string())?;
        let time = time_evaluation(&prob, &partials, vol, &inst.region, &inst.b, alpha)
            .map_err(|e| e.to_string())?;
        let fd_doa = fd_gradient(&inst.b, 1e-4, |b| solve_at(b).0);
        let fd_time = fd_gradient(&inst.b, 1e-4, |b| solve_at(b).1);
        let e_obj = rel_err(&doa.gradient, &fd_doa).max(rel_err(&time.gradient, &fd_time));
        report.worst_objective = report.worst_objective.max(e_obj);
        if e_obj > 1e-3 {
            return Err(format!(
                "instance {}: objective gradient {:?} vs finite differences {:?} (time {:?} vs {:?})",
                report.instances, doa.gradient, fd_doa, time.gradient, fd_time
            ));
        }

        let t0 = ws.raw_times();
        let tscale = t0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for delta in &partials {
            let dp = ws.dp_direction(delta).map_err(|e| e.to_string())?;
            let dt = ws.dt_direction(delta).map_err(|e| e.to_string())?;
            // Fourth-order central stencil; the best step of a short ladder.
            let mut best = f64::INFINITY;
            for eps in [1e-3, 1e-4, 1e-5, 1e-6] {
                let mut sols = Vec::new();
                for c in [2.0, 1.0, -1.0, -2.0] {
                    match raw_solution(shifted(&g, delta, c * eps), &inst.target) {
                        Some(s) => sols.push(s),
                        None => return Err("perturbed generator became singular".into()),
                    }
                }
                let stencil =
                    |a: f64, b: f64, c: f64, d: f64| (-a + 8.0 * b - 8.0 * c + d) / (12.0 * eps);
                let mut worst = 0.0f64;
                for i in 0..dp.len() {
                    let fp = stencil(sols[0].0[i], sols[1].0[i], sols[2].0[i], sols[3].0[i]);
                    let ft = stencil(sols[0].1[i], sols[1].1[i], sols[2].1[i], sols[3].1[i]);
                    worst = worst
                        .max((dp[i] - fp).abs())
                        .max((dt[i] - ft).abs() / tscale);
                }
                best = best.min(worst);
            }
            report.worst_direction = report.worst_direction.max(best);
        }
        if report.worst_direction > 1e-6 {
            return Err(format!(
                "instance {}: directional derivative error {:e} (dim {}, cells {}, t_max {tscale:e}, p range {:?})",
                report.instances,
                report.worst_direction,
                inst.grid.dim(),
                inst.grid.n_cells(),
                ws.raw_probabilities().iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)))
            ));
        }

        let dp = ws.dp_direction(g.rates()).map_err(|e| e.to_string())?;
        let dt = ws.dt_direction(g.rates()).map_err(|e| e.to_string())?;
        for i in 0..dp.len() {
            report.worst_identity = report
                .worst_identity
                .max(dp[i].abs())
                .max((dt[i] + t0[i]).abs() / tscale);
        }
        if report.worst_identity > 1e-10 {
            return Err(format!(
                "instance {}: scaling identity violated by {:e}",
                report.instances, report.worst_identity
            ));
        }
        report.instances += 1;
    }
    Ok(report)
}

pub struct MjpReport {
    pub generators: usize,
    pub comparisons: usize,
    pub worst_z: f64,
}

/// Compare solved `p` and `t` with Monte-Carlo estimates from one random
/// start state per generator. Standard errors come from the exact first and
/// second moments (`G^^T m2 = -2 t^`).
pub fn check_mjp(seed: u64, count: usize, paths: usize) -> Result<MjpReport, String> {
    use doaopt::mjp::{estimate, JumpChain};
    use doaopt::sens::AdjointWorkspace;
    use rand::SeedableRng;
    use rayon::prelude::*;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    while cases.len() < count {
        let n = rng.gen_range(5..=10);
        let g = random_generator(n, &mut rng);
        let mut t_cells = vec![rng.gen_range(0..n)];
        if rng.gen_bool(0.5) {
            t_cells.push(rng.gen_range(0..n));
        }
        let target = CellSet::from_indices(n, CellLabel::Target, t_cells).unwrap();
        let Ok(prob) = AbsorptionProblem::new(g.clone(), target.clone()) else {
            continue;
        };
        if prob.factor().is_err() || prob.free_cells().is_empty() {
            continue;
        }
        let start = prob.free_cells()[rng.gen_range(0..prob.free_cells().len())];
        cases.push((g, target, start, rng.gen::<u64>()));
    }
    let zs: Vec<Result<(f64, f64), String>> = cases
        .par_iter()
        .map(|(g, target, start, s)| {
            let prob =
                AbsorptionProblem::new(g.clone(), target.clone()).map_err(|e| e.to_string())?;
            let ws = AdjointWorkspace::new(&prob).map_err(|e| e.to_string())?;
            let k = prob.restricted_index(*start).unwrap();
            let (p, t) = (ws.raw_probabilities()[k], ws.raw_times()[k]);
            let mut m2: Vec<f64> = ws.raw_times().iter().map(|v| -2.0 * v).collect();
            prob.factor()
                .map_err(|e| e.to_string())?
                .solve_transpose(&mut m2);
            let m = paths as f64;
            let p_se = (p * (1.0 - p) / m).sqrt();
            let t_se = ((m2[k] - t * t).max(0.0) / m).sqrt();
            let chain = JumpChain::new(g).map_err(|e| e.to_string())?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*s);
            let e = estimate(&chain, *start, target, paths, f64::INFINITY, &mut rng);
            let z = |est: f64, exact: f64, se: f64| {
                if se > 0.0 {
                    (est - exact).abs() / se
                } else if est == exact {
                    0.0
                } else {
                    f64::INFINITY
                }
            };
            Ok((z(e.p, p, p_se), z(e.t, t, t_se)))
        })
        .collect();
    let mut report = MjpReport {
        generators: cases.len(),
        comparisons: 0,
        worst_z: 0.0,
    };
    for z in zs {
        let (zp, zt) = z?;
        report.comparisons += 2;
        report.worst_z = report.worst_z.max(zp).max(zt);
    }
    if report.worst_z > 3.0 {
        return Err(format!(
            "Monte-Carlo estimate {:.2} standard errors from the solve",
            report.worst_z
        ));
    }
    Ok(report)
}

/// Two cells on `[0, 1]` under `v = 1` with the right cell as target:
/// `p = (1, 1)`, `t = (0.5, 0)`, `h = (2/3, 1)`.
pub fn check_exact_chain() -> Result<f64, String> {
    use doaopt::field::ConstantField;
    use doaopt::field::FieldAt;
    use doaopt::generator::assemble_field;
    use doaopt::solve::{kruzkov_values, termination_times};

    let grid = Grid::new(AxisBox::cube(1, 0.0, 1.0).unwrap(), vec![2]).unwrap();
    let field = ConstantField {
        velocity: vec![1.0],
    };
    let g = assemble_field(
        &grid,
        &FieldAt {
            field: &field,
            params: &[],
        },
        &QuadratureRule::default(),
    )
    .unwrap();
    let target = CellSet::from_indices(2, CellLabel::Target, vec![1]).unwrap();
    let prob = AbsorptionProblem::new(g, target).unwrap();
    let p = absorption_probabilities(&prob).unwrap().values;
    let t = termination_times(&prob).unwrap().values;
    let h = kruzkov_values(&prob).unwrap().values;
    let err = [
        p[0] - 1.0,
        p[1] - 1.0,
        t[0] - 0.5,
        t[1],
        h[0] - 2.0 / 3.0,
        h[1] - 1.0,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    if err > 1e-12 {
        return Err(format!("p = {p:?}, t = {t:?}, h = {h:?}"));
    }
    Ok(err)
}

/// Smooth random field on `[-1, 1]^d`; with `inward`, `v . n < 0` on the
/// whole boundary.
pub fn random_smooth_field<R: Rng>(d: usize, inward: bool, rng: &mut R) -> CallbackField {
    let waves: Vec<Wave> = (0..d).map(|_| Wave::random(d, rng)).collect();
    let gains: Vec<Wave> = (0..d).map(|_| Wave::random(d, rng)).collect();
    let lin: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    CallbackField::new(
        d,
        0,
        move |x, _b, out| {
            for i in 0..d {
                out[i] = if inward {
                    -x[i] * (1.0 + 4.0 * gains[i].at(x).abs()) + waves[i].at(x)
                } else {
                    (0..d).map(|j| lin[i * d + j] * x[j]).sum::<f64>() + 5.0 * waves[i].at(x)
                };
            }
        },
        |_, _, _, out| out.fill(0.0),
    )
}

/// Sign pattern, column sums, boundary leak, homogeneity and sparsity over
/// random fields in one to three dimensions.
pub fn check_generator_invariants(seed: u64, count: usize) -> Result<usize, String> {
    use doaopt::field::{FieldAt, Scaled};
    use doaopt::generator::assemble_field;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for case in 0..count {
        let d = rng.gen_range(1..=3);
        let res: Vec<usize> = (0..d)
            .map(|_| rng.gen_range(2..=[40, 14, 6][d - 1]))
            .collect();
        let grid = Grid::new(AxisBox::cube(d, -1.0, 1.0).unwrap(), res).unwrap();
        let quad = QuadratureRule::gauss_legendre(rng.gen_range(1..=5)).unwrap();
        let inward = rng.gen_bool(0.5);
        let field = random_smooth_field(d, inward, &mut rng);
        let at = FieldAt {
            field: &field,
            params: &[],
        };
        let g = assemble_field(&grid, &at, &quad).map_err(|e| e.to_string())?;
        let n = grid.n_cells();
        g.check_invariants(1e-12)
            .map_err(|e| format!("case {case}: {e}"))?;
        if g.nnz() > n * (2 * d + 1) {
            return Err(format!(
                "case {case}: nnz {} above {}",
                g.nnz(),
                n * (2 * d + 1)
            ));
        }
        for j in 0..n {
            let boundary = (0..d).any(|k| {
                let i = grid.axis_index(j, k);
                i == 0 || i + 1 == grid.resolution()[k]
            });
            let (_, vals) = g.rates().col(j);
            let sum: f64 = vals.iter().sum();
            let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if (!boundary || inward) && (sum.abs() > 1e-12 * scale || g.leak()[j] != 0.0) {
                return Err(format!("case {case}: cell {j} loses mass ({sum:e}) with no outflow across the boundary"));
            }
            if sum > 1e-12 * scale {
                return Err(format!("case {case}: column {j} sums to {sum:e}"));
            }
        }
        let c = rng.gen_range(0.1..10.0);
        let gs = assemble_field(
            &grid,
            &Scaled {
                inner: at,
                factor: c,
            },
            &quad,
        )
        .map_err(|e| e.to_string())?;
        let scale = g
            .rates()
            .triplets()
            .fold(1.0f64, |m, (_, _, v)| m.max(v.abs()));
        let diff = gs.rates().max_abs_diff(&g.rates().scaled(c));
        if diff > 1e-12 * c * scale {
            return Err(format!(
                "case {case}: G(c v) differs from c G(v) by {diff:e}"
            ));
        }
    }
    Ok(count)
}

/// Strict absorption times on a slowly spiraling focus: every off-target
/// cell has `a = inf` while `t` stays finite.
pub fn check_wrapping(resolutions: &[usize]) -> Result<String, String> {
    use doaopt::field::LinearFocus;
    use doaopt::solve::{absorption_times, termination_times, DEFAULT_SURE_EPSILON};

    let field = LinearFocus {
        decay: 0.1,
        rotation: 2.0,
    };
    let mut notes = Vec::new();
    for &n in resolutions {
        let grid = square_grid(n);
        let target = box_target(&grid, 0.1);
        let g =
            assemble(&grid, &field, &[], &QuadratureRule::default()).map_err(|e| e.to_string())?;
        let prob = AbsorptionProblem::new(g, target.clone()).map_err(|e| e.to_string())?;
        let p = absorption_probabilities(&prob).map_err(|e| e.to_string())?;
        let a = absorption_times(&prob, &p, DEFAULT_SURE_EPSILON).map_err(|e| e.to_string())?;
        let t = termination_times(&prob).map_err(|e| e.to_string())?;
        let off: Vec<usize> = (0..grid.n_cells())
            .filter(|&i| !target.contains(i))
            .collect();
        if let Some(&i) = off.iter().find(|&&i| a.values[i].is_finite()) {
            return Err(format!(
                "{n}x{n}: cell {i} has finite a = {} (p = {})",
                a.values[i], p.values[i]
            ));
        }
        if let Some(&i) = off.iter().find(|&&i| !t.values[i].is_finite()) {
            return Err(format!("{n}x{n}: cell {i} has infinite t"));
        }
        let pmax = off.iter().map(|&i| p.values[i]).fold(0.0, f64::max);
        let tmax = off.iter().map(|&i| t.values[i]).fold(0.0, f64::max);
        notes.push(format!("{n}: max p {pmax:.6}, max t {tmax:.2}"));
    }
    Ok(notes.join("; "))
}

/// `sum_i m_i |p_i - chi_i|` between the discrete absorption probabilities
/// and the simulated indicator, at each resolution.
pub fn refinement_distances(b: &[f64], resolutions: &[usize]) -> Vec<f64> {
    use doaopt::oracle::{oracle_fields, OracleTarget, SimConfig};

    let pf = system_e();
    let tbox = AxisBox::cube(2, -0.05, 0.05).unwrap();
    resolutions
        .iter()
        .map(|&n| {
            let grid = square_grid(n);
            let g = assemble(&grid, pf.as_ref(), b, &QuadratureRule::default()).unwrap();
            let p = absorption_probabilities(
                &AbsorptionProblem::new(g, box_target(&grid, 0.05)).unwrap(),
            )
            .unwrap();
            let cfg = SimConfig::new(
                OracleTarget::Region(Region::Box(tbox.clone())),
                grid.bounds().clone(),
            );
            let o = oracle_fields(&grid, pf.as_ref(), b, &cfg).unwrap();
            p.values
                .iter()
                .zip(&o.indicator.values)
                .map(|(a, c)| (a - c).abs())
                .sum::<f64>()
                * grid.cell_volume()
        })
        .collect()
}
